#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace chunkstack {

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

struct NamedTensor {
  std::string name;
  Dtype dtype = Dtype::F32;
  std::vector<uint64_t> dims;
  std::vector<uint8_t> payload;  // little-endian scalar data

  uint64_t numel() const {
    uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

// Binary named-tensor container:
//   magic "CSCK", u32 version, u64 tensor count, then per tensor:
//   u32 name length, name bytes, u8 dtype tag, u32 rank, u64 dims,
//   little-endian payload. Byte-exact round-trip.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

template <typename T>
NamedTensor pack_tensor(const std::string& name, const std::vector<int64_t>& shape,
                        const std::vector<T>& values) {
  NamedTensor t;
  t.name = name;
  t.dtype = sizeof(T) == 4 ? Dtype::F32 : Dtype::F64;
  for (int64_t d : shape) t.dims.push_back(static_cast<uint64_t>(d));
  t.payload.resize(values.size() * sizeof(T));
  std::memcpy(t.payload.data(), values.data(), t.payload.size());
  return t;
}

template <typename T>
std::vector<T> unpack_tensor(const NamedTensor& t) {
  Dtype want = sizeof(T) == 4 ? Dtype::F32 : Dtype::F64;
  if (t.dtype != want)
    throw std::runtime_error("checkpoint: dtype mismatch for tensor '" + t.name + "'");
  if (t.payload.size() != t.numel() * sizeof(T))
    throw std::runtime_error("checkpoint: payload size mismatch for tensor '" + t.name + "'");
  std::vector<T> out(t.numel());
  std::memcpy(out.data(), t.payload.data(), t.payload.size());
  return out;
}

}  // namespace chunkstack
