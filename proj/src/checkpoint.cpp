#include "specsense/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace specsense::nn {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'N', 'N'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("save_checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, uint32_t(ckpt.meta.size()));
  out.write(ckpt.meta.data(), std::streamsize(ckpt.meta.size()));
  write_u32(out, uint32_t(ckpt.params.size()));
  for (const auto& [name, m] : ckpt.params) {
    write_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_u32(out, uint32_t(m.rows()));
    write_u32(out, uint32_t(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              std::streamsize(sizeof(float)) * m.size());
  }
  if (!out) throw StateError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("load_checkpoint: bad magic in " + path);
  if (read_u32(in) != kVersion)
    throw InputError("load_checkpoint: unsupported version in " + path);

  Checkpoint ckpt;
  ckpt.meta.resize(read_u32(in));
  in.read(ckpt.meta.data(), std::streamsize(ckpt.meta.size()));
  const uint32_t count = read_u32(in);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name(read_u32(in), '\0');
    in.read(name.data(), std::streamsize(name.size()));
    const uint32_t rows = read_u32(in);
    const uint32_t cols = read_u32(in);
    MatF m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            std::streamsize(sizeof(float)) * m.size());
    if (!in) throw InputError("load_checkpoint: truncated blob in " + path);
    ckpt.params.emplace(std::move(name), std::move(m));
  }
  return ckpt;
}

}  // namespace specsense::nn
