#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ftattack/tensor.hpp"

namespace ftattack {

// Checkpoint layout (all integers little-endian):
//   magic   "FTAK" (4 bytes)
//   version u32 (currently 1)
//   count   u32
//   entry*: name_len u32, name bytes, rank u32, dims u64[rank],
//           data f32[prod(dims)]
inline constexpr uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > size)
      throw FormatError(std::string("checkpoint: truncated while reading ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace detail

inline std::vector<uint8_t> checkpoint_save(const NamedTensors& tensors) {
  for (size_t i = 0; i < tensors.size(); ++i)
    for (size_t j = i + 1; j < tensors.size(); ++j)
      if (tensors[i].first == tensors[j].first)
        throw FormatError("checkpoint: duplicate tensor name " + tensors[i].first);
  std::vector<uint8_t> out;
  out.insert(out.end(), {'F', 'T', 'A', 'K'});
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_u32(out, static_cast<uint32_t>(tensor.rank()));
    for (int64_t d : tensor.shape()) detail::put_u64(out, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < tensor.size(); ++i) {
      const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(tensor[i]));
      detail::put_u32(out, bits);
    }
  }
  return out;
}

inline NamedTensors checkpoint_load(const std::vector<uint8_t>& bytes) {
  detail::Reader r{bytes.data(), bytes.size()};
  r.need(4, "magic");
  if (!(bytes[0] == 'F' && bytes[1] == 'T' && bytes[2] == 'A' && bytes[3] == 'K'))
    throw FormatError("checkpoint: bad magic");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t count = r.u32("count");
  NamedTensors tensors;
  tensors.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    const uint32_t name_len = r.u32("name length");
    r.need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
    r.pos += name_len;
    for (const auto& [existing, _] : tensors)
      if (existing == name) throw FormatError("checkpoint: duplicate tensor name " + name);
    const uint32_t rank = r.u32("rank");
    std::vector<int64_t> shape;
    int64_t total = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int64_t>(r.u64("dimension")));
      total *= shape.back();
    }
    Tensor t(shape.empty() ? std::vector<int64_t>{1} : shape);
    if (shape.empty()) total = 1;
    for (int64_t i = 0; i < total; ++i)
      t[i] = static_cast<real>(std::bit_cast<float>(r.u32("tensor data")));
    tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return tensors;
}

inline void checkpoint_write_file(const std::string& path, const NamedTensors& tensors) {
  const std::vector<uint8_t> bytes = checkpoint_save(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

inline NamedTensors checkpoint_read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return checkpoint_load(bytes);
}

inline const Tensor& checkpoint_find(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint: missing tensor " + name);
}

}  // namespace ftattack
