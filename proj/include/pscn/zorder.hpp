#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "pscn/geometry.hpp"
#include "pscn/sampling.hpp"

namespace pscn {

/// The skeleton subset of the embedded centers, listed in Z-order rank.
struct SkeletonCloud {
  Tensor positions;  // n'' x 3
  Tensor features;   // n'' x C', rows gathered from the embedding
  std::vector<std::size_t> source;  // row indices into the embedded cloud
};

inline PointCloud as_point_cloud(const Tensor& positions) {
  PointCloud cloud;
  const auto v = positions.data();
  for (std::size_t i = 0; i < positions.dim(0); ++i) cloud.positions.push_back({v[3 * i], v[3 * i + 1], v[3 * i + 2]});
  return cloud;
}

/// Indices of `count` points equally spaced along the Z-order curve of a
/// (re-normalized) cloud. Points sharing a Morton cell are ranked by their
/// coordinates rather than their index, so the result ignores input order.
inline std::vector<std::size_t> zorder_indices(const PointCloud& cloud, std::size_t count,
                                               int depth = kDefaultMortonDepth) {
  const CanonicalOrder canon(cloud, depth);
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return canon.less(a, b); });
  return equally_spaced_sample(order, count);
}

/// Orders the embedded centers along the Z-order curve and keeps `count`
/// equally spaced ones; features follow their centers by index.
inline SkeletonCloud zorder_sample(const EmbeddedCloud& embedded, std::size_t count,
                                   int depth = kDefaultMortonDepth) {
  const std::size_t n = embedded.positions.dim(0);
  if (count == 0 || count > n) {
    throw InputError("zorder_sample: count " + std::to_string(count) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  auto source = zorder_indices(as_point_cloud(embedded.positions), count, depth);
  return {gather_rows(embedded.positions, source), gather_rows(embedded.features, source),
          std::move(source)};
}

}  // namespace pscn
