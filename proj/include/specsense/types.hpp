#pragma once

#include <stdexcept>
#include <string>

namespace specsense {

// Half-open frequency-bin interval [start, end). Ground truths, anchors,
// proposals and detections all share this representation.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool contains(double x) const { return x >= start && x < end; }
};

inline Interval make_interval(double start, double end) { return {start, end}; }

// A localized detection: interval plus class label and confidence.
// class_id 0 is the generic "signal" foreground class.
struct Detection {
  Interval interval;
  int class_id = 0;
  double score = 1.0;
};

// A labeled ground-truth interval.
struct GroundTruth {
  Interval interval;
  int class_id = 0;
};

// Invalid static parameters (unsupported enum values, non-divisor strides,
// out-of-range filter settings, shape mismatches).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid configuration applied to unusable data (frames too
// short, all-zero input, degenerate regions, aliasing shifts).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Operation invoked out of sequence or aborted mid-run (missing forward
// cache, diverged training).
struct StateError : std::runtime_error {
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace specsense
