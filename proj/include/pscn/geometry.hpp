#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pscn/errors.hpp"

namespace pscn {

using Vec3 = std::array<double, 3>;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Vec3> positions;
  std::optional<std::vector<Vec3>> normals;
  std::optional<int> label;

  std::size_t size() const { return positions.size(); }
  bool has_normals() const { return normals.has_value(); }
};

/// Checks N >= 1, finite coordinates, and unit normals (within 1e-6).
inline void validate(const PointCloud& cloud) {
  if (cloud.positions.empty()) throw InputError("point cloud is empty");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (double v : cloud.positions[i]) {
      if (!std::isfinite(v)) throw InputError("non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (cloud.normals) {
    if (cloud.normals->size() != cloud.size()) {
      throw InputError("normal count " + std::to_string(cloud.normals->size()) +
                       " does not match point count " + std::to_string(cloud.size()));
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& n = (*cloud.normals)[i];
      const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
      if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-6) {
        throw InputError("normal at point " + std::to_string(i) + " is not unit length");
      }
    }
  }
}

/// Uniform translate+scale into [0,1]^3. The longest extent spans [0,1]; the
/// other axes are centred. A cloud of one repeated point lands on the centre.
inline PointCloud normalize_unit_cube(const PointCloud& cloud) {
  validate(cloud);
  Vec3 lo = cloud.positions.front(), hi = lo;
  for (const auto& p : cloud.positions) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  PointCloud out = cloud;
  for (auto& p : out.positions) {
    for (int a = 0; a < 3; ++a) {
      if (extent == 0.0) {
        p[a] = 0.5;
      } else {
        const double margin = 0.5 * (1.0 - (hi[a] - lo[a]) / extent);
        p[a] = std::clamp((p[a] - lo[a]) / extent + margin, 0.0, 1.0);
      }
    }
  }
  return out;
}

inline constexpr int kDefaultMortonDepth = 10;
inline constexpr int kMaxQuantizeDepth = 20;
inline constexpr int kMaxMortonDepth = 21;  // 63-bit codes

using GridCoord = std::array<std::uint32_t, 3>;

struct MortonCode {
  std::uint64_t value = 0;
  int depth = kDefaultMortonDepth;

  auto operator<=>(const MortonCode&) const = default;
};

/// Maps a position in [0,1]^3 to integer cells of a 2^depth grid per axis.
inline GridCoord quantize(const Vec3& p, int depth) {
  if (depth < 1 || depth > kMaxQuantizeDepth) {
    throw InputError("quantize: depth " + std::to_string(depth) + " outside [1, 20]");
  }
  const double cells = std::ldexp(1.0, depth);
  const auto top = static_cast<std::uint32_t>((1u << depth) - 1);
  GridCoord g{};
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0 && p[a] <= 1.0)) {
      throw InputError("quantize: coordinate " + std::to_string(p[a]) +
                       " outside [0,1]; normalize the cloud first");
    }
    g[a] = std::min(static_cast<std::uint32_t>(std::floor(p[a] * cells)), top);
  }
  return g;
}

namespace detail {

// Spreads the low 21 bits of v so that bit i lands at bit 3i.
constexpr std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | (v << 32)) & 0x1f00000000ffffULL;
  v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

constexpr std::uint64_t compact_bits(std::uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v | (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v | (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v | (v >> 16)) & 0x1f00000000ffffULL;
  v = (v | (v >> 32)) & 0x1fffffULL;
  return v;
}

inline void check_depth(int depth) {
  if (depth < 1 || depth > kMaxMortonDepth) {
    throw InputError("morton: depth " + std::to_string(depth) + " outside [1, 21]");
  }
}

}  // namespace detail

/// Interleaves bits level by level from the most significant, x before y before z.
inline MortonCode morton_encode(const GridCoord& g, int depth) {
  detail::check_depth(depth);
  const std::uint64_t limit = 1ULL << depth;
  for (int a = 0; a < 3; ++a) {
    if (g[a] >= limit) {
      throw InputError("morton_encode: component " + std::to_string(g[a]) + " needs more than " +
                       std::to_string(depth) + " bits");
    }
  }
  return {(detail::spread_bits(g[0]) << 2) | (detail::spread_bits(g[1]) << 1) |
              detail::spread_bits(g[2]),
          depth};
}

inline GridCoord morton_decode(const MortonCode& code) {
  detail::check_depth(code.depth);
  if (code.depth < kMaxMortonDepth && code.value >> (3 * code.depth) != 0) {
    throw InputError("morton_decode: code exceeds 3*depth bits");
  }
  return {static_cast<std::uint32_t>(detail::compact_bits(code.value >> 2)),
          static_cast<std::uint32_t>(detail::compact_bits(code.value >> 1)),
          static_cast<std::uint32_t>(detail::compact_bits(code.value))};
}

/// Codes for positions already inside [0,1]^3.
inline std::vector<MortonCode> morton_codes(std::span<const Vec3> positions, int depth) {
  std::vector<MortonCode> codes;
  codes.reserve(positions.size());
  for (const auto& p : positions) codes.push_back(morton_encode(quantize(p, depth), depth));
  return codes;
}

/// Indices sorted by Morton code; equal codes keep their original index order.
/// The cloud must already be normalized into [0,1]^3.
inline std::vector<std::size_t> morton_order(const PointCloud& cloud, int depth = kDefaultMortonDepth) {
  const auto codes = morton_codes(cloud.positions, depth);
  std::vector<std::size_t> order(codes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return codes[a].value < codes[b].value; });
  return order;
}

/// Picks `count` entries of `order` at positions round(i * L / count).
inline std::vector<std::size_t> equally_spaced_sample(std::span<const std::size_t> order,
                                                      std::size_t count) {
  const std::size_t length = order.size();
  if (count == 0 || count > length) {
    throw InputError("equally_spaced_sample: count " + std::to_string(count) +
                     " outside [1, " + std::to_string(length) + "]");
  }
  std::vector<std::size_t> picked;
  picked.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // round-half-up of i*L/count in integer arithmetic
    picked.push_back(order[(2 * i * length + count) / (2 * count)]);
  }
  return picked;
}

}  // namespace pscn
