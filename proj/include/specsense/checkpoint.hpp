#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specsense/nn.hpp"

namespace specsense::nn {

// Versioned checkpoint: a metadata string (architecture description) plus
// named little-endian float32 parameter blobs.
struct Checkpoint {
  std::string meta;
  std::map<std::string, MatF> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace specsense::nn
