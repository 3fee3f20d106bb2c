#pragma once

// "SGRL" checkpoint files.
//
//   bytes 0..3   "SGRL"
//   u32          format version
//   repeated until EOF:
//     u32        name length in bytes
//     bytes      UTF-8 name
//     u64 rows, u64 cols
//     f64 x rows*cols, row-major
//
// All integers and floats are little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sgrl/error.hpp"
#include "sgrl/tensor.hpp"

namespace sgrl {

inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'R', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedMatrix {
  std::string name;
  Matrix value;
  friend bool operator==(const NamedMatrix&, const NamedMatrix&) = default;
};

namespace detail {
template <class T>
void put_le(std::string& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(value);
  else
    bits = std::uint64_t(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((bits >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ContractViolation("checkpoint: truncated record");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  if constexpr (std::is_same_v<T, double>)
    return std::bit_cast<double>(bits);
  else
    return T(bits);
}
}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedMatrix>& entries) {
  std::string out(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& e : entries) {
    detail::put_le<std::uint32_t>(out, std::uint32_t(e.name.size()));
    out += e.name;
    detail::put_le<std::uint64_t>(out, e.value.rows());
    detail::put_le<std::uint64_t>(out, e.value.cols());
    for (double x : e.value.values()) detail::put_le<double>(out, x);
  }
  return out;
}

inline std::vector<NamedMatrix> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw ContractViolation("checkpoint: missing SGRL magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw ContractViolation("checkpoint: unsupported version " + std::to_string(version));
  std::vector<NamedMatrix> entries;
  while (pos < bytes.size()) {
    const auto len = detail::get_le<std::uint32_t>(bytes, pos);
    if (pos + len > bytes.size()) throw ContractViolation("checkpoint: truncated name");
    NamedMatrix e;
    e.name = bytes.substr(pos, len);
    pos += len;
    const auto rows = detail::get_le<std::uint64_t>(bytes, pos);
    const auto cols = detail::get_le<std::uint64_t>(bytes, pos);
    if (cols != 0 && rows > (bytes.size() - pos) / 8 / cols)
      throw ContractViolation("checkpoint: truncated payload for " + e.name);
    e.value = Matrix(rows, cols);
    for (double& x : e.value.values()) x = detail::get_le<double>(bytes, pos);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_checkpoint(const std::string& path, const std::vector<NamedMatrix>& entries) {
  const std::string bytes = encode_checkpoint(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open checkpoint for writing");
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw IoError(path, "failed writing checkpoint");
}

inline std::vector<NamedMatrix> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open checkpoint for reading");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

inline const Matrix& find_entry(const std::vector<NamedMatrix>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e.value;
  throw ContractViolation("checkpoint: missing entry " + name);
}

}  // namespace sgrl
