#pragma once

#include <span>
#include <string>

#include "pscn/nn.hpp"
#include "pscn/sampling.hpp"
#include "pscn/zorder.hpp"

namespace pscn {

/// m x n x (c_x + c_y) grid whose cell (i, j) is concat(x_i, y_j).
struct CorrelationTensor {
  Tensor grid;
  std::string sources;
};

inline CorrelationTensor pairwise_fusion(const Tensor& x, const Tensor& y, std::string sources = {}) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw DimensionError("pairwise_fusion: inputs " + shape_str(x.shape()) + " and " +
                         shape_str(y.shape()) + " must be matrices with equal channel counts");
  }
  return {pairwise_concat(x, y), std::move(sources)};
}

/// Reals held by the two correlation tensors for n' regions, n'' skeleton points, c channels.
constexpr std::size_t correlation_elements(std::size_t regions, std::size_t skeleton, std::size_t c) {
  return regions * skeleton * 2 * c + regions * skeleton * 6;
}

struct Correlation {
  CorrelationTensor structure;  // n' x n'' x 2C'
  CorrelationTensor position;   // n' x n'' x 6
};

inline Correlation correlate(const EmbeddedCloud& embedded, const SkeletonCloud& skeleton) {
  if (embedded.features.dim(0) == 0 || skeleton.features.dim(0) == 0) {
    throw InputError("correlate: empty embedded or skeleton cloud");
  }
  Correlation c{pairwise_fusion(embedded.features, skeleton.features, "embedding x skeleton features"),
                pairwise_fusion(embedded.positions, skeleton.positions, "positions x skeleton positions")};
  const std::size_t expect = correlation_elements(embedded.features.dim(0), skeleton.features.dim(0),
                                                  embedded.features.dim(1));
  if (c.structure.grid.numel() + c.position.grid.numel() != expect) {
    throw ContractError("correlate: correlation tensors hold an unexpected number of elements");
  }
  return c;
}

/// Channel-concatenates the two grids (structure first), runs the 1x1 conv
/// stack, applies ReLU and max-pools over the skeleton axis: n' x C'.
inline Tensor reduce_correlation(const CorrelationTensor& structure, const CorrelationTensor& position,
                                 std::span<const Conv2dLayer> g) {
  const auto& s = structure.grid;
  const auto& p = position.grid;
  if (s.rank() != 3 || p.rank() != 3 || s.dim(0) != p.dim(0) || s.dim(1) != p.dim(1)) {
    throw DimensionError("reduce_correlation: grids " + shape_str(s.shape()) + " and " +
                         shape_str(p.shape()) + " do not share their first two dimensions");
  }
  if (g.empty()) throw ConfigError("reduce_correlation: empty conv stack");
  Tensor y = concat({s, p}, 2);
  for (const auto& layer : g) y = apply(y, layer);
  return pool(relu(y), 1, PoolKind::max);
}

/// n' x (C' + 3): embedding plus correlation feature, then positions.
struct FusedFeature {
  Tensor values;
};

inline FusedFeature skip_fuse(const EmbeddedCloud& embedded, const Tensor& x_cs) {
  if (x_cs.shape() != embedded.features.shape()) {
    throw DimensionError("skip_fuse: correlation feature " + shape_str(x_cs.shape()) +
                         " does not match embedding " + shape_str(embedded.features.shape()));
  }
  return {concat({add(embedded.features, x_cs), embedded.positions}, 1)};
}

}  // namespace pscn
