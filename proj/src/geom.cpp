#include "specsense/geom.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace specsense::geom {

AnchorGrid generate_anchors(int input_size, int stride,
                            std::vector<int> scales) {
  if (stride <= 0 || input_size <= 0 || input_size % stride != 0) {
    throw ConfigError("anchor stride " + std::to_string(stride) +
                      " does not divide input size " +
                      std::to_string(input_size));
  }
  if (scales.empty()) throw ConfigError("anchor scale list is empty");

  AnchorGrid grid;
  grid.input_size = input_size;
  grid.stride = stride;
  grid.scales = std::move(scales);
  const int positions = input_size / stride;
  grid.anchors.reserve(size_t(positions) * grid.scales.size());
  for (int p = 0; p < positions; ++p) {
    const double center = (p + 0.5) * stride;
    for (int s : grid.scales) {
      Interval a{center - 0.5 * s, center + 0.5 * s};
      a.start = std::max(0.0, a.start);
      a.end = std::min(double(input_size), a.end);
      grid.anchors.push_back(a);
    }
  }
  return grid;
}

RpnTargets assign_rpn_targets(const AnchorGrid& grid,
                              const std::vector<Interval>& truths,
                              double overlap_min, double overlap_max) {
  const int n = int(grid.anchors.size());
  RpnTargets t;
  t.labels.assign(n, AnchorLabel::Negative);
  t.regressions.assign(n, Eigen::Vector2d::Zero());
  t.matched_truth.assign(n, -1);
  if (truths.empty()) return t;

  for (int i = 0; i < n; ++i) {
    double best = 0.0;
    int best_truth = -1;
    for (size_t k = 0; k < truths.size(); ++k) {
      const double v = iou(grid.anchors[i], truths[k]);
      if (v > best) {
        best = v;
        best_truth = int(k);
      }
    }
    if (best > overlap_max) {
      t.labels[i] = AnchorLabel::Positive;
      t.matched_truth[i] = best_truth;
    } else if (best >= overlap_min) {
      t.labels[i] = AnchorLabel::Ignore;
    }
  }

  // Force one positive anchor per truth, even below overlap_max: each truth
  // claims its best not-yet-claimed anchor so close truths cannot starve
  // each other. Claimed anchors regress toward the truth that claimed them.
  std::vector<char> claimed(size_t(n), 0);
  for (size_t k = 0; k < truths.size(); ++k) {
    double best = 0.0;
    int best_anchor = -1;
    for (int i = 0; i < n; ++i) {
      if (claimed[size_t(i)]) continue;
      const double v = iou(grid.anchors[size_t(i)], truths[k]);
      if (v > best) {
        best = v;
        best_anchor = i;
      }
    }
    if (best_anchor >= 0) {
      claimed[size_t(best_anchor)] = 1;
      t.labels[size_t(best_anchor)] = AnchorLabel::Positive;
      t.matched_truth[size_t(best_anchor)] = int(k);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (t.labels[i] == AnchorLabel::Positive) {
      t.regressions[i] =
          encode_regression(grid.anchors[i], truths[size_t(t.matched_truth[i])]);
    }
  }
  return t;
}

Eigen::Vector2d encode_regression(const Interval& anchor,
                                  const Interval& truth) {
  const double alen = anchor.length();
  if (alen <= 0.0) throw InputError("encode_regression: zero-length anchor");
  return {(truth.center() - anchor.center()) / alen,
          std::log(truth.length() / alen)};
}

Interval decode_regression(const Interval& anchor, const Eigen::Vector2d& t,
                           double clip_size) {
  const double alen = anchor.length();
  const double center = anchor.center() + t[0] * alen;
  const double len = std::exp(t[1]) * alen;
  Interval out{center - 0.5 * len, center + 0.5 * len};
  out.start = std::min(std::max(out.start, 0.0), clip_size);
  out.end = std::min(std::max(out.end, 0.0), clip_size);
  return out;
}

namespace {

bool score_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.interval.start != b.interval.start)
    return a.interval.start < b.interval.start;
  return a.interval.end < b.interval.end;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double overlap) {
  std::stable_sort(dets.begin(), dets.end(), score_order);
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  std::vector<bool> suppressed(dets.size(), false);
  for (size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (size_t j = i + 1; j < dets.size(); ++j) {
      if (suppressed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (iou(dets[i].interval, dets[j].interval) > overlap)
        suppressed[j] = true;
    }
  }
  return kept;
}

std::vector<Detection> threshold_detections(const std::vector<Detection>& dets,
                                            double p_min) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const auto& d : dets)
    if (d.score >= p_min) out.push_back(d);
  return out;
}

}  // namespace specsense::geom
