#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "specsense/types.hpp"

namespace specsense::geom {

// Intersection-over-union of two intervals. Symmetric, in [0, 1].
inline double iou(const Interval& a, const Interval& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

// Regular grid of candidate intervals: one anchor per (position, scale).
// Anchor index = position * scales.size() + scale_index, matching the
// row-major flattening of the RPN's (positions x scales) output maps.
struct AnchorGrid {
  int input_size = 0;
  int stride = 0;
  std::vector<int> scales;
  std::vector<Interval> anchors;  // clipped to [0, input_size]

  int positions() const { return input_size / stride; }
  int num_scales() const { return int(scales.size()); }
};

AnchorGrid generate_anchors(int input_size, int stride,
                            std::vector<int> scales);

enum class AnchorLabel : int8_t { Negative = 0, Positive = 1, Ignore = 2 };

// Per-anchor training assignment. regressions rows are (t_c, t_w) pairs and
// are meaningful only where labels[i] == Positive.
struct RpnTargets {
  std::vector<AnchorLabel> labels;
  std::vector<Eigen::Vector2d> regressions;
  std::vector<int> matched_truth;  // index into truths, -1 if none

  int count(AnchorLabel l) const {
    return int(std::count(labels.begin(), labels.end(), l));
  }
};

// Screens every anchor against the ground truths: IoU > overlap_max with any
// truth is positive, IoU < overlap_min with all truths is negative, anything
// between is ignored. The best-IoU anchor of each truth is forced positive so
// no truth is left unlearnable. Each positive regresses toward its best truth.
RpnTargets assign_rpn_targets(const AnchorGrid& grid,
                              const std::vector<Interval>& truths,
                              double overlap_min = 0.3,
                              double overlap_max = 0.7);

// Scale-invariant offsets: t_c = (truth_c - anchor_c) / anchor_len,
// t_w = ln(truth_len / anchor_len).
Eigen::Vector2d encode_regression(const Interval& anchor,
                                  const Interval& truth);

// Exact inverse of encode_regression, then clipped to [0, clip_size].
Interval decode_regression(const Interval& anchor, const Eigen::Vector2d& t,
                           double clip_size);

// Greedy descending-score suppression of same-class detections overlapping a
// kept detection by more than `overlap`. Ties break toward the lower start
// index. Output is sorted by score descending.
std::vector<Detection> nms(std::vector<Detection> dets, double overlap);

// Keeps detections with score >= p_min.
std::vector<Detection> threshold_detections(const std::vector<Detection>& dets,
                                            double p_min);

}  // namespace specsense::geom
