#pragma once

#include <vector>

#include "specsense/dsp.hpp"
#include "specsense/types.hpp"

namespace specsense::energy {

struct EnergyConfig {
  int hysteresis_count = 5;  // consecutive sub-threshold bins that end a hit
  int min_width_bins = 2;
};

// Adaptive threshold: mean plus population standard deviation of the frame.
double noise_threshold(const dsp::SpectrumFrame& frame);

// Left-to-right scan against noise_threshold. A region opens on the first
// bin strictly above the threshold and closes once hysteresis_count
// consecutive bins sit at or below it; the trailing sub-threshold run is not
// part of the detection. Class ids are 0 and every score is 1.0.
std::vector<Detection> energy_detect(const dsp::SpectrumFrame& frame,
                                     const EnergyConfig& config = {});

}  // namespace specsense::energy
