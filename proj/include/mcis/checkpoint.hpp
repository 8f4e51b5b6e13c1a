#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcis/tape.hpp"

namespace mcis {

struct NamedTensor {
  std::string name;
  Mat data;
  int rank = 2;  // 1 for biases (stored as a column), 2 for weights
};

// "WMCK" checkpoint: magic, version u32, d_z u32, [iteration u64 when
// version == 2], tensor count u32, then per tensor: name length u16, UTF-8
// name, rank u8, dims u32 each, row-major little-endian f64 payload.
// Tensors are written sorted by name. Version 2 is used for search
// snapshots, which carry the search iteration.
struct Checkpoint {
  std::uint32_t version = 1;
  int d_z = 0;
  std::optional<std::uint64_t> iteration;
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcis
