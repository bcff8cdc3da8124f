#include "chunkstack/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace chunkstack {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename U>
void write_le(std::ofstream& out, U v) {
  // host is little-endian; payloads are defined LE
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_le(std::ifstream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_le(out, kVersion);
  write_le(out, static_cast<uint64_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_le(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_le(out, static_cast<uint8_t>(t.dtype));
    write_le(out, static_cast<uint32_t>(t.dims.size()));
    for (uint64_t d : t.dims) write_le(out, d);
    size_t scalar = t.dtype == Dtype::F32 ? 4 : 8;
    if (t.payload.size() != t.numel() * scalar)
      throw std::runtime_error("checkpoint: payload size mismatch for '" + t.name + "'");
    out.write(reinterpret_cast<const char*>(t.payload.data()),
              static_cast<std::streamsize>(t.payload.size()));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = read_le<uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  uint64_t count = read_le<uint64_t>(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    uint32_t name_len = read_le<uint32_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    uint8_t tag = read_le<uint8_t>(in);
    if (tag > 1) throw std::runtime_error("checkpoint: bad dtype tag");
    t.dtype = static_cast<Dtype>(tag);
    uint32_t rank = read_le<uint32_t>(in);
    t.dims.resize(rank);
    for (uint32_t r = 0; r < rank; ++r) t.dims[r] = read_le<uint64_t>(in);
    size_t scalar = t.dtype == Dtype::F32 ? 4 : 8;
    t.payload.resize(t.numel() * scalar);
    in.read(reinterpret_cast<char*>(t.payload.data()),
            static_cast<std::streamsize>(t.payload.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor '" + t.name + "'");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace chunkstack
