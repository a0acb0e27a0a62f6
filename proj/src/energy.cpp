#include "specsense/energy.hpp"

#include <cmath>

namespace specsense::energy {

double noise_threshold(const dsp::SpectrumFrame& frame) {
  const auto& s = frame.bins;
  if (s.size() == 0) throw InputError("noise_threshold: empty frame");
  const double mean = s.cast<double>().mean();
  const double var = (s.cast<double>() - mean).square().mean();
  return mean + std::sqrt(var);
}

std::vector<Detection> energy_detect(const dsp::SpectrumFrame& frame,
                                     const EnergyConfig& config) {
  if (config.hysteresis_count < 1 || config.min_width_bins < 1)
    throw ConfigError("energy_detect: counts must be >= 1");
  const double gamma = noise_threshold(frame);
  const int n = int(frame.bins.size());

  std::vector<Detection> out;
  int start = -1;     // first bin of the open region, -1 when closed
  int last_hot = -1;  // most recent bin at or above the threshold
  int below = 0;

  auto close = [&](int end_exclusive) {
    if (start >= 0 && end_exclusive - start >= config.min_width_bins)
      out.push_back({{double(start), double(end_exclusive)}, 0, 1.0});
    start = -1;
    below = 0;
  };

  for (int i = 0; i < n; ++i) {
    if (double(frame.bins[i]) > gamma) {
      if (start < 0) start = i;
      last_hot = i;
      below = 0;
    } else if (start >= 0 && ++below >= config.hysteresis_count) {
      close(last_hot + 1);
    }
  }
  close(last_hot + 1);  // region still open at the frame edge
  return out;
}

}  // namespace specsense::energy
