#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pscn/nn.hpp"

namespace pscn {

// Layout (all integers little-endian):
//   "PSCN" | u32 version
//   repeated until EOF:
//     u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
inline constexpr std::array<char, 4> kCheckpointMagic{'P', 'S', 'C', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
bool get_le(std::istream& is, U& v) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, std::span<const NamedTensor> entries) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& e : entries) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) detail::put_le<std::uint64_t>(os, d);
    for (double v : e.tensor.data()) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw InputError("checkpoint: bad magic, expected PSCN");
  }
  std::uint32_t version = 0;
  if (!detail::get_le(is, version) || version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported format version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  std::uint32_t name_len = 0;
  while (detail::get_le(is, name_len)) {
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !detail::get_le(is, rank)) {
      throw InputError("checkpoint: truncated entry header");
    }
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::get_le(is, v)) throw InputError("checkpoint: truncated shape of " + name);
      d = static_cast<std::size_t>(v);
    }
    std::vector<double> values(numel_of(shape));
    for (double& v : values) {
      std::uint64_t bits = 0;
      if (!detail::get_le(is, bits)) throw InputError("checkpoint: truncated payload of " + name);
      v = std::bit_cast<double>(bits);
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, std::span<const NamedTensor> entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint " + path);
  write_checkpoint(os, entries);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

/// Copies checkpoint values into same-named targets; every target must be present.
inline void restore(std::span<NamedTensor> targets, std::span<const NamedTensor> saved) {
  for (auto& t : targets) {
    const NamedTensor* match = nullptr;
    for (const auto& s : saved) {
      if (s.name == t.name) match = &s;
    }
    if (!match) throw InputError("checkpoint: missing tensor " + t.name);
    if (match->tensor.shape() != t.tensor.shape()) {
      throw InputError("checkpoint: " + t.name + " has shape " + shape_str(match->tensor.shape()) +
                       ", model expects " + shape_str(t.tensor.shape()));
    }
    auto dst = t.tensor.mutable_data();
    std::copy(match->tensor.data().begin(), match->tensor.data().end(), dst.begin());
  }
}

}  // namespace pscn
