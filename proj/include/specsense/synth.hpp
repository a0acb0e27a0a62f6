#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "specsense/dsp.hpp"
#include "specsense/rng.hpp"
#include "specsense/types.hpp"

namespace specsense::synth {

// One transmitter: center frequency relative to the receiver center, occupied
// two-sided bandwidth, and modulation scheme. Bandwidths are already snapped
// to the synthesizer's achievable grid so the stored value is exact.
struct TransmissionSpec {
  double center_freq_hz = 0.0;
  double bandwidth_hz = 0.0;
  dsp::Modulation scheme = dsp::Modulation::BPSK;

  Interval occupied() const {
    return {center_freq_hz - 0.5 * bandwidth_hz,
            center_freq_hz + 0.5 * bandwidth_hz};
  }
};

// A fully specified multi-transmitter scene. Rendering is deterministic given
// the embedded seed.
struct Scenario {
  std::vector<TransmissionSpec> transmissions;  // pairwise disjoint, <= 5
  double snr_db = 20.0;
  uint64_t seed = 0;
  double band_hz = 200e3;  // receiver sample rate == observed band
};

// One labeled sample: the detector input, optional time-domain mixture for
// the AMC path, and ground-truth bin intervals with modulation labels.
struct DatasetRecord {
  dsp::SpectrumFrame spectrum;
  Eigen::VectorXcf baseband;  // empty unless the dataset carries baseband
  std::vector<GroundTruth> truths;
  uint64_t seed = 0;
  double snr_db = 0.0;
};

struct Dataset {
  std::vector<DatasetRecord> records;
  int fft_size = 1024;
  double sample_rate_hz = 200e3;
  bool has_baseband = false;

  size_t size() const { return records.size(); }
};

struct SynthConfig {
  int n = 1;
  double snr_lo_db = 20.0;  // snr_lo == snr_hi means a fixed-SNR set
  double snr_hi_db = 20.0;
  uint64_t seed = 1;
  bool with_baseband = false;
  int max_transmissions = 5;
  double sample_rate_hz = 200e3;
  int fft_size = 1024;
};

// Draw range for per-transmission bandwidth, as fractions of the band.
inline constexpr double kBandwidthLoFrac = 1.0 / 64.0;
inline constexpr double kBandwidthHiFrac = 1.0 / 8.0;

// Snaps a requested bandwidth to the nearest rate achievable by the
// rational resampler. Exposed so scenario draws and rendering agree exactly.
double achievable_bandwidth(double bandwidth_hz, double band_hz);

// Repeatedly finds the first overlapping pair in scan order and removes one
// member by coin flip until the set is conflict-free. A non-empty input
// always keeps at least one transmission.
std::vector<TransmissionSpec> resolve_overlaps(
    std::vector<TransmissionSpec> candidates, Rng& rng);

// Draws max_candidates random transmissions, then applies resolve_overlaps.
// Never returns an empty set.
Scenario random_scenario(Rng& rng, double snr_db, double band_hz,
                         int max_candidates = 5);

// Converts a frequency interval to half-open bin indices on the centered
// fft_size-point grid: bin = fft_size/2 + round(fft_size * f / band).
Interval freq_to_bins(const Interval& freq_hz, double band_hz, int fft_size);

// Synthesizes every transmission (modulate, pulse shape, resample, shift),
// mixes them, normalizes total power, applies the Rician and AWGN chain and
// produces the centered dB spectrum plus bin-domain ground truths.
DatasetRecord render_scenario(const Scenario& s, int fft_size = 1024,
                              bool keep_baseband = false);

Dataset generate_dataset(const SynthConfig& cfg);

// Text index (.idx) plus raw little-endian float32 payload (.f32).
// `provenance` is recorded verbatim as a comment line in the index.
void save_dataset(const Dataset& ds, const std::string& path_prefix,
                  const std::string& provenance = "");
Dataset load_dataset(const std::string& path_prefix);

// Samples and seconds needed to fill one detector input at the given rate:
// a single FFT frame for the 1D path, fft_size frames for a square
// spectrogram.
struct AcquisitionCost {
  int64_t samples = 0;
  double seconds = 0.0;
};

AcquisitionCost acquisition_cost(double sample_rate_hz, int fft_size,
                                 bool spectrogram);

}  // namespace specsense::synth
