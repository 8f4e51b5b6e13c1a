#include "mcis/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mcis/common.hpp"

namespace mcis {
namespace {

constexpr char kMagic[4] = {'W', 'M', 'C', 'K'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

const NamedTensor& Checkpoint::find(const std::string& name) const {
  const auto it = std::find_if(tensors.begin(), tensors.end(),
                               [&](const NamedTensor& t) { return t.name == name; });
  if (it == tensors.end()) throw IoError("checkpoint tensor missing: " + name);
  return *it;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (ck.version == 2 && !ck.iteration)
    throw ConfigError("checkpoint: version 2 requires an iteration field");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());

  std::vector<NamedTensor> sorted = ck.tensors;
  std::sort(sorted.begin(), sorted.end(),
            [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });

  out.write(kMagic, 4);
  write_pod(out, ck.version);
  write_pod(out, static_cast<std::uint32_t>(ck.d_z));
  if (ck.version == 2) write_pod(out, *ck.iteration);
  write_pod(out, static_cast<std::uint32_t>(sorted.size()));
  for (const NamedTensor& t : sorted) {
    write_pod(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<std::uint8_t>(t.rank));
    if (t.rank == 1) {
      write_pod(out, static_cast<std::uint32_t>(t.data.rows()));
    } else {
      write_pod(out, static_cast<std::uint32_t>(t.data.rows()));
      write_pod(out, static_cast<std::uint32_t>(t.data.cols()));
    }
    for (Eigen::Index r = 0; r < t.data.rows(); ++r)
      for (Eigen::Index c = 0; c < t.data.cols(); ++c) {
        const double v = t.data(r, c);
        write_pod(out, v);
      }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad checkpoint magic in " + path.string());

  Checkpoint ck;
  ck.version = read_pod<std::uint32_t>(in);
  if (ck.version != 1 && ck.version != 2)
    throw IoError("unsupported checkpoint version " + std::to_string(ck.version));
  ck.d_z = static_cast<int>(read_pod<std::uint32_t>(in));
  if (ck.version == 2) ck.iteration = read_pod<std::uint64_t>(in);
  const auto count = read_pod<std::uint32_t>(in);
  ck.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = read_pod<std::uint16_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    t.rank = static_cast<int>(read_pod<std::uint8_t>(in));
    std::uint32_t rows = 0, cols = 1;
    if (t.rank == 1) {
      rows = read_pod<std::uint32_t>(in);
    } else if (t.rank == 2) {
      rows = read_pod<std::uint32_t>(in);
      cols = read_pod<std::uint32_t>(in);
    } else {
      throw IoError("unsupported tensor rank in " + path.string());
    }
    t.data.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) t.data(r, c) = read_pod<double>(in);
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace mcis
