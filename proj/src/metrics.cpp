#include "specsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "specsense/geom.hpp"

namespace specsense::metrics {
namespace {

// Deterministic detection ordering: score descending, then interval, then
// original index.
std::vector<int> score_order(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].interval.start != dets[b].interval.start)
      return dets[a].interval.start < dets[b].interval.start;
    if (dets[a].interval.end != dets[b].interval.end)
      return dets[a].interval.end < dets[b].interval.end;
    return a < b;
  });
  return order;
}

// Highest-IoU unclaimed truth for one detection, or -1. Ties go to the
// lowest truth index.
int best_truth(const Detection& d, const std::vector<GroundTruth>& truths,
               const std::vector<char>& claimed, double iou_min, bool classful,
               double* iou_out) {
  int best = -1;
  double best_iou = iou_min;  // strictly above the threshold
  for (int t = 0; t < int(truths.size()); ++t) {
    if (claimed[t]) continue;
    if (classful && truths[t].class_id != d.class_id) continue;
    const double v = geom::iou(d.interval, truths[t].interval);
    if (v > best_iou) {
      best_iou = v;
      best = t;
    }
  }
  if (best >= 0) *iou_out = best_iou;
  return best;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& truths,
                             double iou_min, bool classful) {
  MatchResult r;
  std::vector<char> claimed(truths.size(), 0);
  for (int d : score_order(dets)) {
    double iou = 0.0;
    const int t = best_truth(dets[d], truths, claimed, iou_min, classful, &iou);
    if (t >= 0) {
      claimed[t] = 1;
      r.matched.push_back({d, t, iou});
    } else {
      r.unmatched_dets.push_back(d);
    }
  }
  for (int t = 0; t < int(truths.size()); ++t)
    if (!claimed[t]) r.unmatched_truths.push_back(t);
  return r;
}

double precision(int tp, int fp) {
  if (tp < 0 || fp < 0) throw InputError("precision: negative count");
  return (tp + fp == 0) ? 1.0 : double(tp) / double(tp + fp);
}

double recall(int tp, int fn) {
  if (tp < 0 || fn < 0) throw InputError("recall: negative count");
  return (tp + fn == 0) ? 0.0 : double(tp) / double(tp + fn);
}

namespace {

struct SweepEntry {
  double score;
  int frame;
  int det;
};

// Pooled greedy sweep across the dataset in descending score order. Returns
// one (recall, precision) point per detection plus the total truth count.
std::vector<PrPoint> sweep(const std::vector<FrameSample>& frames,
                           double iou_min, bool classful,
                           int64_t* total_truths) {
  int64_t n_truths = 0;
  std::vector<SweepEntry> entries;
  for (int f = 0; f < int(frames.size()); ++f) {
    n_truths += int64_t(frames[f].truths.size());
    for (int d = 0; d < int(frames[f].dets.size()); ++d)
      entries.push_back({frames[f].dets[d].score, f, d});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const SweepEntry& a, const SweepEntry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     const Interval& ia = frames[a.frame].dets[a.det].interval;
                     const Interval& ib = frames[b.frame].dets[b.det].interval;
                     if (ia.start != ib.start) return ia.start < ib.start;
                     if (ia.end != ib.end) return ia.end < ib.end;
                     if (a.frame != b.frame) return a.frame < b.frame;
                     return a.det < b.det;
                   });

  std::vector<std::vector<char>> claimed(frames.size());
  for (size_t f = 0; f < frames.size(); ++f)
    claimed[f].assign(frames[f].truths.size(), 0);

  std::vector<PrPoint> points;
  points.reserve(entries.size());
  int64_t tp = 0, fp = 0;
  for (const auto& e : entries) {
    double iou = 0.0;
    const int t = best_truth(frames[e.frame].dets[e.det],
                             frames[e.frame].truths, claimed[e.frame], iou_min,
                             classful, &iou);
    if (t >= 0) {
      claimed[e.frame][t] = 1;
      ++tp;
    } else {
      ++fp;
    }
    PrPoint p;
    p.score = e.score;
    p.recall = (n_truths == 0) ? 0.0 : double(tp) / double(n_truths);
    p.precision = double(tp) / double(tp + fp);
    points.push_back(p);
  }
  *total_truths = n_truths;
  return points;
}

}  // namespace

std::vector<PrPoint> pr_points(const std::vector<FrameSample>& frames,
                               double iou_min, bool classful) {
  int64_t n_truths = 0;
  return sweep(frames, iou_min, classful, &n_truths);
}

double interpolated_ap(const std::vector<FrameSample>& frames, double iou_min,
                       bool classful, int points) {
  if (points < 2) throw ConfigError("interpolated_ap: need >= 2 levels");
  int64_t n_truths = 0;
  const std::vector<PrPoint> curve = sweep(frames, iou_min, classful,
                                           &n_truths);
  if (n_truths == 0) return curve.empty() ? 1.0 : 0.0;

  double sum = 0.0;
  for (int k = 0; k < points; ++k) {
    const double level = double(k) / double(points - 1);
    double best = 0.0;  // no point reaches this recall -> precision 0
    for (const auto& p : curve)
      if (p.recall >= level) best = std::max(best, p.precision);
    sum += best;
  }
  return sum / double(points);
}

std::vector<double> default_map_cutoffs() {
  std::vector<double> c(10);
  for (int i = 0; i < 10; ++i) c[i] = double(i) / 10.0;
  return c;
}

double mean_ap(const std::vector<FrameSample>& frames,
               const std::vector<double>& cutoffs, double iou_min,
               bool classful) {
  if (cutoffs.empty()) throw ConfigError("mean_ap: no cutoffs");
  double sum = 0.0;
  for (double c : cutoffs) {
    if (c < 0.0 || c >= 1.0) throw ConfigError("mean_ap: cutoff outside [0,1)");
    std::vector<FrameSample> kept(frames.size());
    for (size_t f = 0; f < frames.size(); ++f) {
      kept[f].truths = frames[f].truths;
      for (const auto& d : frames[f].dets)
        if (d.score >= c) kept[f].dets.push_back(d);
    }
    sum += interpolated_ap(kept, iou_min, classful);
  }
  return sum / double(cutoffs.size());
}

double mean_iou(const std::vector<FrameSample>& frames, bool classful,
                double iou_min) {
  double sum = 0.0;
  int64_t count = 0;
  for (const auto& f : frames) {
    const MatchResult m = match_detections(f.dets, f.truths, iou_min, classful);
    for (const auto& p : m.matched) sum += p.iou;
    count += int64_t(m.matched.size()) + m.fp() + m.fn();
  }
  if (count == 0)
    throw InputError("mean_iou: no detections or truths to record");
  return sum / double(count);
}

double prob_detection(const MatchResult& match) {
  const int denom = match.tp() + match.fn();
  if (denom == 0) throw InputError("prob_detection: no truths");
  return double(match.tp()) / double(denom);
}

double prob_detection(const std::vector<FrameSample>& frames, bool classful,
                      double iou_min) {
  int64_t tp = 0, fn = 0;
  for (const auto& f : frames) {
    const MatchResult m = match_detections(f.dets, f.truths, iou_min, classful);
    tp += m.tp();
    fn += m.fn();
  }
  if (tp + fn == 0) throw InputError("prob_detection: no truths in dataset");
  return double(tp) / double(tp + fn);
}

double prob_false_alarm(const MatchResult& match) {
  const int denom = match.tp() + match.fp();
  return (denom == 0) ? 0.0 : double(match.fp()) / double(denom);
}

double prob_false_alarm(const std::vector<FrameSample>& frames, bool classful,
                        double iou_min) {
  int64_t tp = 0, fp = 0;
  for (const auto& f : frames) {
    const MatchResult m = match_detections(f.dets, f.truths, iou_min, classful);
    tp += m.tp();
    fp += m.fp();
  }
  return (tp + fp == 0) ? 0.0 : double(fp) / double(tp + fp);
}

std::vector<MethodTiming> timing_report(
    const std::vector<std::pair<std::string, double>>& mean_seconds) {
  if (mean_seconds.empty()) throw ConfigError("timing_report: no methods");
  double slowest = 0.0;
  for (const auto& [name, s] : mean_seconds) {
    if (s < 0.0) throw InputError("timing_report: negative time for " + name);
    slowest = std::max(slowest, s);
  }
  if (slowest <= 0.0)
    throw InputError("timing_report: all methods measured at zero");
  std::vector<MethodTiming> out;
  for (const auto& [name, s] : mean_seconds)
    out.push_back({name, s, s / slowest});
  return out;
}

EvalRow evaluate(const std::vector<FrameSample>& frames, double snr_db,
                 bool classful, double iou_min,
                 const std::vector<double>& cutoffs) {
  EvalRow row;
  row.snr_db = snr_db;
  row.n_frames = int64_t(frames.size());
  for (const auto& f : frames) {
    row.n_truths += int64_t(f.truths.size());
    row.n_dets += int64_t(f.dets.size());
  }
  row.map = mean_ap(frames, cutoffs, iou_min, classful);
  row.miou = (row.n_truths + row.n_dets == 0)
                 ? 0.0
                 : mean_iou(frames, classful, iou_min);
  row.pd = (row.n_truths == 0) ? 0.0
                               : prob_detection(frames, classful, iou_min);
  row.pfa = prob_false_alarm(frames, classful, iou_min);
  return row;
}

std::string to_csv(const EvalReport& report, const std::string& provenance) {
  std::string out;
  if (!provenance.empty()) out += "# " + provenance + "\n";
  out += "snr_db,map,miou,pd,pfa,n_frames,n_truths,n_dets\n";
  char buf[256];
  auto emit = [&](const char* label, const EvalRow& r) {
    if (label)
      std::snprintf(buf, sizeof buf, "%s,", label);
    else
      std::snprintf(buf, sizeof buf, "%.17g,", r.snr_db);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%lld,%lld,%lld\n", r.map, r.miou,
                  r.pd, r.pfa, (long long)r.n_frames, (long long)r.n_truths,
                  (long long)r.n_dets);
    out += buf;
  };
  for (const auto& r : report.rows) emit(nullptr, r);
  emit("overall", report.overall);
  return out;
}

}  // namespace specsense::metrics
