#pragma once

// 1D Faster-RCNN detector: fully convolutional feature extractor, region
// proposal network, and ROI classifier head, with a per-sample alternating
// trainer. Operates on 1024-bin dB spectra.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "specsense/checkpoint.hpp"
#include "specsense/dsp.hpp"
#include "specsense/geom.hpp"
#include "specsense/nn.hpp"
#include "specsense/rng.hpp"
#include "specsense/synth.hpp"
#include "specsense/types.hpp"

namespace specsense::frcnn {

using nn::MatF;

enum class Family { Vgg, VggSkip, Signal };

Family family_from_string(const std::string& name);
std::string to_string(Family family);

struct FeatureExtractorConfig {
  Family family = Family::Vgg;
  int stride = 16;
  bool downscaled = false;
  int input_size = 1024;
};

// Output filter count by stride: 64, 128, 256 then capped at 512.
int filters_for_stride(int stride);

struct FrcnnConfig {
  FeatureExtractorConfig fx;
  int n_classes = 1;  // foreground classes; background is the extra last slot
  std::vector<int> anchor_scales = {32, 64, 128, 256, 512};
  int train_proposals = 256;
  int infer_proposals = 64;

  int rpn_depth() const { return fx.downscaled ? 128 : 512; }
  int fc_width() const { return fx.downscaled ? 2048 : 4096; }
};

// One backbone block. vgg: three 3x1 convs, each ReLU, then optional pool.
// vgg_skip: the three convs run at half width with a parallel 1x1 projection
// of the block input at the other half; the two are concatenated, batch
// normalized, then pooled. signal: one 7x1 conv, ReLU, batchnorm, pool.
struct ConvBlock {
  std::vector<nn::Conv1d<float>> convs;
  std::vector<nn::ReLU<float>> relus;
  std::unique_ptr<nn::Conv1d<float>> skip;
  std::unique_ptr<nn::BatchNorm1d<float>> bn;
  bool pooled = true;
  nn::MaxPool2<float> pool;

  MatF forward(const MatF& x, bool train);
  MatF backward(const MatF& gy);
};

class FeatureExtractor {
 public:
  FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng);

  MatF forward(const MatF& x, bool train);
  MatF backward(const MatF& gfeat);

  int out_channels() const { return out_channels_; }
  const FeatureExtractorConfig& config() const { return cfg_; }

  void visit_params(
      const std::function<void(const std::string&, MatF*, MatF*)>& fn);

  std::vector<ConvBlock> blocks;

 private:
  FeatureExtractorConfig cfg_;
  int out_channels_ = 0;
};

// Per-frame standardization to zero mean, unit variance.
MatF standardize(const dsp::SpectrumFrame& frame);

struct RpnOut {
  MatF probs;  // k x n, sigmoid scores
  MatF regs;   // 2k x n, rows (2s, 2s+1) = (t_c, t_w) for scale s
};

struct RpnHead {
  nn::Conv1d<float> inter;
  nn::ReLU<float> relu;
  nn::Conv1d<float> cls;
  nn::Conv1d<float> reg;

  RpnHead(int in_channels, int depth, int k);
  void init(Rng& rng);
  RpnOut forward(const MatF& features);
  // dz_cls is the gradient with respect to the pre-sigmoid scores.
  MatF backward(const MatF& dz_cls, const MatF& dreg);
};

struct ClassifierHead {
  nn::Dense<float> fc1, fc2;
  nn::ReLU<float> r1, r2;
  nn::Dense<float> cls;  // C+1 logits
  nn::Dense<float> reg;  // 2C per-class offsets

  ClassifierHead(int in_dim, int width, int n_classes);
  void init(Rng& rng);
  struct Out {
    MatF logits;  // (C+1) x B
    MatF regs;    // 2C x B
  };
  Out forward(const MatF& flat);
  MatF backward(const MatF& dlogits, const MatF& dregs);
};

// Decode every anchor, clip, drop sub-2-bin intervals, NMS at 0.7, keep the
// top_n highest scores.
std::vector<Detection> propose_regions(const MatF& probs, const MatF& regs,
                                       const geom::AnchorGrid& grid,
                                       int top_n);

struct ClassifiedRegions {
  std::vector<Detection> detections;
  int skipped = 0;  // proposals that collapsed under the stride mapping
};

struct TrainConfig {
  int epochs = 20;
  int epoch_length = 10000;  // samples per epoch; 0 means one dataset pass
  double overlap_min = 0.3;
  double overlap_max = 0.7;
  double nms_overlap = 0.5;  // final detection NMS
  float lr = 1e-5f;
  uint64_t seed = 1;
  int anchor_batch = 128;  // at most half positive
  int roi_batch = 16;      // at most half foreground
  double fg_iou_min = 0.5;
  bool append_gt_proposals = true;
  bool per_epoch_alternation = false;
};

struct EpochLoss {
  double rpn_cls = 0, rpn_reg = 0, cls = 0, reg = 0;
};

struct AnchorBatch {
  std::vector<int> anchors;  // indices into the grid
  int n_pos = 0;
};

// Balanced anchor subsample: all positives up to max_total/2, the remainder
// filled with negatives; ignores are never sampled.
AnchorBatch sample_anchor_batch(const geom::RpnTargets& targets, int max_total,
                                Rng& rng);

class FrcnnModel {
 private:
  FrcnnConfig cfg_;
  Rng init_rng_;  // declared before the stages so they initialize from it

 public:
  FeatureExtractor fx;
  RpnHead rpn;
  ClassifierHead classifier;

  FrcnnModel(const FrcnnConfig& cfg, uint64_t seed);

  MatF extract(const MatF& x, bool train) { return fx.forward(x, train); }
  RpnOut rpn_forward(const MatF& features) { return rpn.forward(features); }
  ClassifiedRegions classify_regions(const MatF& features,
                                     const std::vector<Detection>& proposals);
  std::vector<Detection> detect(const dsp::SpectrumFrame& frame, double p_min);

  const FrcnnConfig& config() const { return cfg_; }
  const geom::AnchorGrid& grid() const { return grid_; }

  nn::Checkpoint to_checkpoint();
  static FrcnnModel from_checkpoint(const nn::Checkpoint& ck);

  void visit_params(
      const std::function<void(const std::string&, MatF*, MatF*)>& fn,
      bool backbone, bool rpn_head, bool cls_head);

 private:
  geom::AnchorGrid grid_;
};

struct TrainResult {
  std::vector<EpochLoss> history;
};

TrainResult train_alternating(FrcnnModel& model, const synth::Dataset& data,
                              const TrainConfig& cfg);

void write_loss_csv(const std::string& path,
                    const std::vector<EpochLoss>& history,
                    const std::string& provenance);

}  // namespace specsense::frcnn
