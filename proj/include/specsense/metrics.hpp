#pragma once

#include <string>
#include <vector>

#include "specsense/types.hpp"

namespace specsense::metrics {

// Detections and truths for one frame; datasets are vectors of these.
struct FrameSample {
  std::vector<Detection> dets;
  std::vector<GroundTruth> truths;
};

struct MatchResult {
  struct Pair {
    int det = -1;
    int truth = -1;
    double iou = 0.0;
  };
  std::vector<Pair> matched;
  std::vector<int> unmatched_dets;    // false positives
  std::vector<int> unmatched_truths;  // missed truths

  int tp() const { return int(matched.size()); }
  int fp() const { return int(unmatched_dets.size()); }
  int fn() const { return int(unmatched_truths.size()); }
};

// Greedy matching in descending score order: each detection takes the
// highest-IoU still-unmatched truth with IoU strictly above iou_min.
// Duplicates over an already-claimed truth become false positives. With
// classful set, a detection can only match a truth of its own class, so a
// well-placed detection of the wrong class counts FP and leaves the truth
// unmatched.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& truths,
                             double iou_min = 0.5, bool classful = false);

// 0/0 conventions: precision 1.0 (nothing claimed, nothing wrong),
// recall 0.0.
double precision(int tp, int fp);
double recall(int tp, int fn);

// Interpolated average precision over the whole dataset: pool detections
// across frames, sweep in descending score order marking TP/FP, then average
// the per-recall-level maximum precision at `points` evenly spaced recall
// levels. A dataset with no truths scores 1.0 when there are also no
// detections and 0.0 otherwise.
double interpolated_ap(const std::vector<FrameSample>& frames,
                       double iou_min = 0.5, bool classful = false,
                       int points = 11);

// Score cutoffs the mAP averages over: {0.0, 0.1, ..., 0.9}.
std::vector<double> default_map_cutoffs();

// Mean of interpolated_ap over score cutoffs, keeping only detections with
// score >= cutoff at each one.
double mean_ap(const std::vector<FrameSample>& frames,
               const std::vector<double>& cutoffs = default_map_cutoffs(),
               double iou_min = 0.5, bool classful = false);

// Records one IoU per event: the matched IoU for a TP, zero for every FP
// (duplicates included) and every unmatched truth, then averages. Throws
// InputError when there is nothing to record.
double mean_iou(const std::vector<FrameSample>& frames, bool classful = false,
                double iou_min = 0.5);

// True positive rate TP/(TP+FN); single-frame and dataset forms. Throws
// InputError when the dataset holds no truths.
double prob_detection(const MatchResult& match);
double prob_detection(const std::vector<FrameSample>& frames,
                      bool classful = false, double iou_min = 0.5);

// False discovery rate FP/(TP+FP); zero detections give 0.0.
double prob_false_alarm(const MatchResult& match);
double prob_false_alarm(const std::vector<FrameSample>& frames,
                        bool classful = false, double iou_min = 0.5);

// Per-method mean seconds per frame, normalized so the slowest method is 1.
struct MethodTiming {
  std::string name;
  double mean_s = 0.0;
  double normalized = 0.0;
};

std::vector<MethodTiming> timing_report(
    const std::vector<std::pair<std::string, double>>& mean_seconds);

// Raw precision/recall sweep points for plotting.
struct PrPoint {
  double score = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

std::vector<PrPoint> pr_points(const std::vector<FrameSample>& frames,
                               double iou_min = 0.5, bool classful = false);

struct EvalRow {
  double snr_db = 0.0;
  double map = 0.0;
  double miou = 0.0;
  double pd = 0.0;
  double pfa = 0.0;
  int64_t n_frames = 0;
  int64_t n_truths = 0;
  int64_t n_dets = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;       // per-SNR breakdown
  EvalRow overall;                 // pooled over every frame
  double mean_inference_s = 0.0;   // caller-measured; kept out of the CSV
};

// All four rates for one batch of frames. snr_db is carried through to the
// row untouched.
EvalRow evaluate(const std::vector<FrameSample>& frames, double snr_db,
                 bool classful = false, double iou_min = 0.5,
                 const std::vector<double>& cutoffs = default_map_cutoffs());

// CSV with a '#' provenance line, a header row, one row per SNR and a final
// "overall" row. Deterministic for identical inputs.
std::string to_csv(const EvalReport& report, const std::string& provenance);

}  // namespace specsense::metrics
