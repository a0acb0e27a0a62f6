#include "specsense/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace specsense::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Gathers `count` bits starting at `pos`, MSB first; missing bits read as 0.
unsigned bit_group(const std::vector<uint8_t>& bits, size_t pos, int count) {
  unsigned v = 0;
  for (int k = 0; k < count; ++k) {
    const size_t i = pos + size_t(k);
    const unsigned b = (i < bits.size() && bits[i]) ? 1u : 0u;
    v = (v << 1) | b;
  }
  return v;
}

// 2-bit Gray code to PAM level in {-3,-1,+1,+3}: 00 01 11 10.
double gray2_level(unsigned g) {
  static constexpr double lut[4] = {-3.0, -1.0, +3.0, +1.0};
  return lut[g & 3u];
}

}  // namespace

const char* modulation_name(Modulation m) {
  switch (m) {
    case Modulation::BPSK: return "BPSK";
    case Modulation::QPSK: return "QPSK";
    case Modulation::PAM4: return "PAM4";
    case Modulation::QAM16: return "QAM16";
  }
  return "?";
}

int bits_per_symbol(Modulation m) {
  switch (m) {
    case Modulation::BPSK: return 1;
    case Modulation::QPSK: return 2;
    case Modulation::PAM4: return 2;
    case Modulation::QAM16: return 4;
  }
  throw ConfigError("unsupported modulation scheme");
}

CVec modulate(const std::vector<uint8_t>& bits, Modulation scheme) {
  if (bits.empty()) throw InputError("modulate: empty bit vector");
  const int bps = bits_per_symbol(scheme);
  const size_t n_sym = (bits.size() + size_t(bps) - 1) / size_t(bps);
  CVec out(n_sym);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt5 = 1.0 / std::sqrt(5.0);
  const double inv_sqrt10 = 1.0 / std::sqrt(10.0);

  for (size_t s = 0; s < n_sym; ++s) {
    const unsigned g = bit_group(bits, s * size_t(bps), bps);
    switch (scheme) {
      case Modulation::BPSK:
        out[s] = {g ? 1.0 : -1.0, 0.0};
        break;
      case Modulation::QPSK: {
        // Gray: each bit selects the sign of one axis.
        const double i = (g & 2u) ? -1.0 : 1.0;
        const double q = (g & 1u) ? -1.0 : 1.0;
        out[s] = {i * inv_sqrt2, q * inv_sqrt2};
        break;
      }
      case Modulation::PAM4:
        out[s] = {gray2_level(g) * inv_sqrt5, 0.0};
        break;
      case Modulation::QAM16: {
        const double i = gray2_level(g >> 2);
        const double q = gray2_level(g & 3u);
        out[s] = {i * inv_sqrt10, q * inv_sqrt10};
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd raised_cosine_taps(double rolloff, int span_symbols, int sps) {
  if (rolloff < 0.0 || rolloff > 1.0)
    throw ConfigError("raised cosine rolloff must lie in [0, 1]");
  if (sps < 2) throw ConfigError("raised cosine needs sps >= 2");
  if (span_symbols < 1) throw ConfigError("raised cosine span must be >= 1");

  const int half = span_symbols * sps / 2;
  const int n_taps = 2 * half + 1;
  Eigen::VectorXd h(n_taps);
  for (int n = -half; n <= half; ++n) {
    const double t = double(n) / sps;  // time in symbol periods
    double v;
    const double denom = 1.0 - 4.0 * rolloff * rolloff * t * t;
    if (std::abs(denom) < 1e-10) {
      // singularity at t = +-1/(2a): limit value
      v = (kPi / 4.0) * sinc(1.0 / (2.0 * rolloff));
    } else {
      v = sinc(t) * std::cos(kPi * rolloff * t) / denom;
    }
    h[n + half] = v;
  }
  return h;
}

CVec pulse_shape(const CVec& symbols, double rolloff, int span_symbols,
                 int sps) {
  const Eigen::VectorXd h = raised_cosine_taps(rolloff, span_symbols, sps);
  const Eigen::Index n_sym = symbols.size();
  const Eigen::Index n_out = n_sym * sps + (h.size() - 1);
  CVec out = CVec::Zero(n_out);
  // Upsampled convolution: only every sps-th input sample is nonzero.
  for (Eigen::Index s = 0; s < n_sym; ++s) {
    out.segment(s * sps, h.size()) += symbols[s] * h;
  }
  return out;
}

CVec resample(const CVec& x, int up, int down) {
  if (up <= 0 || down <= 0)
    throw ConfigError("resample factors must be positive");
  if (up == down) return x;

  // Conceptually: zero-stuff by `up`, lowpass at the tighter of the two
  // Nyquist limits, keep every `down`-th sample. The filter length scales
  // with the ratio so its transition band stays narrow relative to the
  // passband, and the inner loop only touches the nonzero input samples.
  const int ratio = std::max(up, down);
  const int num_taps = std::max(129, 16 * ratio + 1);
  const double fs_up = double(up);               // work in units of fs_in
  const double bw = fs_up / double(ratio);       // two-sided
  const FirFilter lp = design_lowpass(bw * 0.999, fs_up, num_taps);

  const Eigen::VectorXd taps = lp.taps * double(up);  // restore signal power
  const Eigen::Index half = taps.size() / 2;
  const Eigen::Index n_out = (x.size() * up) / down;
  CVec out(n_out);
  for (Eigen::Index m = 0; m < n_out; ++m) {
    const Eigen::Index center = m * down;  // position on the stuffed grid
    Eigen::Index i_lo = 0;
    if (center > half) i_lo = (center - half + up - 1) / up;
    const Eigen::Index i_hi =
        std::min<Eigen::Index>(x.size() - 1, (center + half) / up);
    std::complex<double> acc = 0.0;
    for (Eigen::Index i = i_lo; i <= i_hi; ++i)
      acc += x[i] * taps[i * up - center + half];
    out[m] = acc;
  }
  return out;
}

BasebandFrame frequency_shift(const BasebandFrame& frame, double f_o_hz) {
  if (frame.sample_rate_hz <= 0.0)
    throw ConfigError("frequency_shift: sample rate must be positive");
  if (std::abs(f_o_hz) >= frame.sample_rate_hz / 2.0)
    throw InputError("frequency_shift: |f_o| exceeds Nyquist, would alias");
  if (f_o_hz == 0.0) return frame;

  BasebandFrame out{CVec(frame.size()), frame.sample_rate_hz};
  const double w = -2.0 * kPi * f_o_hz / frame.sample_rate_hz;
  for (Eigen::Index n = 0; n < frame.size(); ++n) {
    out.samples[n] =
        frame.samples[n] * std::complex<double>(std::cos(w * double(n)),
                                                std::sin(w * double(n)));
  }
  return out;
}

Eigen::VectorXd sinc_kernel(double bandwidth_hz, double sample_rate_hz,
                            int num_taps) {
  if (bandwidth_hz <= 0.0 || bandwidth_hz >= sample_rate_hz)
    throw ConfigError("sinc_kernel: bandwidth must lie in (0, sample_rate)");
  if (num_taps < 1 || num_taps % 2 == 0)
    throw ConfigError("sinc_kernel: tap count must be odd and positive");

  const double r = bandwidth_hz / sample_rate_hz;
  const int half = num_taps / 2;
  Eigen::VectorXd h(num_taps);
  for (int n = -half; n <= half; ++n) h[n + half] = r * sinc(r * n);
  return h;
}

FirFilter design_lowpass(double bandwidth_hz, double sample_rate_hz,
                         int num_taps) {
  Eigen::VectorXd h = sinc_kernel(bandwidth_hz, sample_rate_hz, num_taps);
  // Hamming taper, then renormalize DC gain to exactly 1.
  const int n = num_taps;
  if (n > 1) {
    for (int k = 0; k < n; ++k)
      h[k] *= 0.54 - 0.46 * std::cos(2.0 * kPi * k / (n - 1));
  }
  h /= h.sum();
  return FirFilter{std::move(h), bandwidth_hz};
}

BasebandFrame apply_fir(const BasebandFrame& frame, const FirFilter& filter) {
  const int n_taps = filter.num_taps();
  if (frame.size() < n_taps)
    throw InputError("apply_fir: frame shorter than the filter");

  const int half = n_taps / 2;
  BasebandFrame out{CVec(frame.size()), frame.sample_rate_hz};
  for (Eigen::Index n = 0; n < frame.size(); ++n) {
    std::complex<double> acc = 0.0;
    const Eigen::Index k_lo = std::max<Eigen::Index>(0, half - n);
    const Eigen::Index k_hi =
        std::min<Eigen::Index>(n_taps - 1, frame.size() - 1 - n + half);
    for (Eigen::Index k = k_lo; k <= k_hi; ++k) {
      acc += filter.taps[k] * frame.samples[n + k - half];
    }
    out.samples[n] = acc;
  }
  return out;
}

BasebandFrame normalize_power(const BasebandFrame& frame) {
  if (frame.size() == 0) throw InputError("normalize_power: empty frame");
  const double mean_power = frame.samples.squaredNorm() / double(frame.size());
  if (mean_power <= 0.0)
    throw InputError("normalize_power: all-zero frame");
  BasebandFrame out = frame;
  out.samples /= std::sqrt(mean_power);
  return out;
}

BasebandFrame awgn(const BasebandFrame& frame, double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0.0) return frame;
  const double noise_power = std::pow(10.0, -snr_db / 10.0);
  const double sigma = std::sqrt(noise_power);
  BasebandFrame out = frame;
  for (Eigen::Index n = 0; n < out.size(); ++n)
    out.samples[n] += sigma * rng.normal_complex();
  return out;
}

BasebandFrame rician_channel(const BasebandFrame& frame,
                             const RicianConfig& config, Rng& rng) {
  if (frame.size() == 0) throw InputError("rician_channel: empty frame");
  if (config.k_factor < 0.0)
    throw ConfigError("rician_channel: K factor must be non-negative");
  if (config.los_only || std::isinf(config.k_factor)) return frame;

  const double los_w =
      std::sqrt(config.k_factor / (config.k_factor + 1.0));
  const double scatter_w =
      los_w * std::pow(10.0, config.scatter_gain_db / 20.0);
  const std::complex<double> coeff = rng.normal_complex();

  BasebandFrame out{CVec(frame.size()), frame.sample_rate_hz};
  const int d = config.delay_samples;
  for (Eigen::Index n = 0; n < frame.size(); ++n) {
    std::complex<double> v = los_w * frame.samples[n];
    if (n >= d) v += scatter_w * coeff * frame.samples[n - d];
    out.samples[n] = v;
  }
  return out;
}

SpectrumFrame fft_db(const BasebandFrame& frame, int fft_size) {
  if (fft_size <= 0) throw ConfigError("fft_db: fft size must be positive");
  if (frame.size() < fft_size)
    throw InputError("fft_db: frame shorter than fft size (" +
                     std::to_string(frame.size()) + " < " +
                     std::to_string(fft_size) + ")");

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(frame.samples.data(),
                                       frame.samples.data() + fft_size);
  std::vector<std::complex<double>> spec(fft_size);
  fft.fwd(spec, in);

  const double scale = 1.0 / std::sqrt(double(fft_size));
  SpectrumFrame out;
  out.bins.resize(fft_size);
  const int half = fft_size / 2;
  for (int k = 0; k < fft_size; ++k) {
    // fftshift: output index half+k holds input bin k (mod N)
    const int src = (k + half) % fft_size;
    const double mag = std::abs(spec[size_t(src)]) * scale;
    const double db = 20.0 * std::log10(std::max(mag, 1e-300));
    out.bins[k] = float(std::max(db, kDbFloor));
  }
  return out;
}

}  // namespace specsense::dsp
