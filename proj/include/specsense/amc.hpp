#pragma once

// Modulation classification of isolated transmissions. Each detection is cut
// out of the time-domain mixture (frequency shift to DC plus lowpass), then a
// small 1D CNN labels it BPSK/QPSK/PAM4/QAM16 or NoSignal.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "specsense/checkpoint.hpp"
#include "specsense/dsp.hpp"
#include "specsense/frcnn.hpp"
#include "specsense/nn.hpp"
#include "specsense/rng.hpp"
#include "specsense/synth.hpp"
#include "specsense/types.hpp"

namespace specsense::amc {

using nn::MatF;

enum class AMCClass : int {
  BPSK = 0,
  QPSK = 1,
  PAM4 = 2,
  QAM16 = 3,
  NoSignal = 4,
};

inline constexpr int kNumClasses = 5;

const char* class_name(AMCClass c);

// Inverse of synth::freq_to_bins: half-open bin interval to Hz on the
// centered grid.
Interval bins_to_freq(const Interval& bins, double band_hz, int fft_size);

// Shifts the band at f_o down to DC and lowpasses to the two-sided width
// bandwidth_hz (clamped just under the sample rate), 129 taps.
dsp::BasebandFrame isolate_by_freq(const dsp::BasebandFrame& frame,
                                   double f_o_hz, double bandwidth_hz);

// Same, taking the detection's bin interval.
dsp::BasebandFrame isolate_signal(const dsp::BasebandFrame& frame,
                                  const Detection& det, int fft_size);

struct AmcExample {
  Eigen::VectorXcf iq;
  int label = 0;
};

struct AmcDataset {
  std::vector<AmcExample> examples;

  size_t size() const { return examples.size(); }
};

// Cuts one perturbed clip per ground truth (frequency offset +-2 kHz,
// bandwidth scaled by uniform [0.7, 1.5]) plus one NoSignal clip per record
// from a truth-free window of the same width distribution.
AmcDataset make_amc_dataset(const synth::Dataset& ds, Rng& rng);

struct AmcBlock {
  nn::Conv1d<float> conv;
  nn::ReLU<float> relu;
  nn::BatchNorm1d<float> bn;
  nn::MaxPool2<float> pool;

  AmcBlock(int in_ch, int out_ch) : conv(in_ch, out_ch, 7), bn(out_ch) {}
  MatF forward(const MatF& x, bool train);
  MatF backward(const MatF& gy);
};

class AmcModel {
 private:
  Rng init_rng_;

 public:
  static constexpr int kInputLen = 1024;
  static constexpr int kFilters = 32;

  std::vector<AmcBlock> blocks;
  nn::Dense<float> fc;

  explicit AmcModel(uint64_t seed);

  // I/Q clip as a unit-power 2 x 1024 real tensor.
  static MatF to_tensor(const Eigen::VectorXcf& iq);

  MatF forward(const MatF& x, bool train);  // 5 x 1 logits
  void backward(const MatF& dlogits);

  Eigen::VectorXf class_probs(const Eigen::VectorXcf& iq);
  AMCClass classify(const dsp::BasebandFrame& clip);

  void visit_params(
      const std::function<void(const std::string&, MatF*, MatF*)>& fn);
  nn::Checkpoint to_checkpoint();
  static AmcModel from_checkpoint(const nn::Checkpoint& ck);
};

struct AmcTrainConfig {
  int epochs = 40;
  float lr = 1e-3f;
  uint64_t seed = 1;
  double val_frac = 0.1;
  int batch = 32;  // clips averaged into one optimizer step
};

struct AmcEpoch {
  double loss = 0.0;
  double val_accuracy = 0.0;
};

struct AmcTrainResult {
  std::vector<AmcEpoch> history;
};

AmcTrainResult train_amc(AmcModel& model, const AmcDataset& data,
                         const AmcTrainConfig& cfg);

void write_amc_loss_csv(const std::string& path,
                        const std::vector<AmcEpoch>& history,
                        const std::string& provenance);

// Full pipeline: detect on the frame's spectrum, isolate each detection,
// classify it, and drop NoSignal results.
std::vector<Detection> detect_and_classify(const dsp::BasebandFrame& frame,
                                           frcnn::FrcnnModel& detector,
                                           AmcModel& classifier, double p_min);

}  // namespace specsense::amc
