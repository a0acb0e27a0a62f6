#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "specsense/rng.hpp"
#include "specsense/types.hpp"

namespace specsense::dsp {

using CVec = Eigen::VectorXcd;

// dB floor applied when converting FFT magnitudes, keeps log output bounded.
inline constexpr double kDbFloor = -120.0;

// Complex time-domain samples at a nominal sample rate.
struct BasebandFrame {
  CVec samples;
  double sample_rate_hz = 0.0;

  Eigen::Index size() const { return samples.size(); }
};

// Centered dB-magnitude FFT of a baseband frame; DC sits at index size/2.
struct SpectrumFrame {
  Eigen::ArrayXf bins;

  int fft_size() const { return int(bins.size()); }
};

// Symmetric linear-phase lowpass, DC gain normalized to 1.
struct FirFilter {
  Eigen::VectorXd taps;
  double cutoff_hz = 0.0;

  int num_taps() const { return int(taps.size()); }
};

enum class Modulation : int { BPSK = 0, QPSK = 1, PAM4 = 2, QAM16 = 3 };

inline constexpr int kNumModulations = 4;

const char* modulation_name(Modulation m);
int bits_per_symbol(Modulation m);

// Maps a bit stream onto unit-average-power constellation symbols, one symbol
// per bits_per_symbol group (the last group is zero-padded). BPSK maps bit 0
// to -1 and bit 1 to +1; QPSK/QAM16 are Gray coded; PAM4 uses levels
// {-3,-1,+1,+3}/sqrt(5).
CVec modulate(const std::vector<uint8_t>& bits, Modulation scheme);

// Unit-peak raised-cosine impulse response spanning span_symbols symbols at
// sps samples per symbol (odd length span_symbols*sps + 1).
Eigen::VectorXd raised_cosine_taps(double rolloff, int span_symbols, int sps);

// Upsamples symbols by sps and convolves with the raised-cosine response.
// Output length = len(symbols)*sps + span_symbols*sps (the filter transient).
CVec pulse_shape(const CVec& symbols, double rolloff, int span_symbols,
                 int sps);

// Rational-rate polyphase-style resampler; output length floor(len*up/down).
// Spectral content keeps its absolute frequency.
CVec resample(const CVec& x, int up, int down);

// y(t) = s(t) * exp(-j 2 pi f_o t): contents at +f_o move to DC.
BasebandFrame frequency_shift(const BasebandFrame& frame, double f_o_hz);

// Raw truncated-sinc kernel: h[n] = (B/fs) sinc((B/fs) n), n symmetric about
// zero. Passband is the two-sided bandwidth B centered at DC.
Eigen::VectorXd sinc_kernel(double bandwidth_hz, double sample_rate_hz,
                            int num_taps);

// Hamming-windowed sinc kernel with DC gain renormalized to 1.
FirFilter design_lowpass(double bandwidth_hz, double sample_rate_hz,
                         int num_taps = 129);

// Centered same-length convolution; the filter's group delay is compensated.
BasebandFrame apply_fir(const BasebandFrame& frame, const FirFilter& filter);

// Scales the frame to unit mean power (1/N) sum |y|^2 = 1.
BasebandFrame normalize_power(const BasebandFrame& frame);

// Adds complex Gaussian noise of per-sample variance 10^(-snr_db/10); the
// caller guarantees unit signal power. snr_db = +inf means no noise.
BasebandFrame awgn(const BasebandFrame& frame, double snr_db, Rng& rng);

// Static indoor Rician model: line-of-sight copy weighted by the K factor
// plus one delayed scattered path with a random complex coefficient held
// constant over the frame.
struct RicianConfig {
  double k_factor = 4.0;  // linear
  int delay_samples = 2;
  double scatter_gain_db = -10.0;  // relative to the LOS weight
  bool los_only = false;
};

BasebandFrame rician_channel(const BasebandFrame& frame,
                             const RicianConfig& config, Rng& rng);

// Centered 20*log10 |FFT/sqrt(N)| of the first fft_size samples, floored at
// kDbFloor. Unit-power white noise averages ~0 dB per bin.
SpectrumFrame fft_db(const BasebandFrame& frame, int fft_size);

}  // namespace specsense::dsp
