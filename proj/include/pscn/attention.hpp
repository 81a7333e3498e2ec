#pragma once

#include <span>

#include "pscn/nn.hpp"

namespace pscn {

struct AttentionWeights {
  Tensor channel;  // 1 x C, non-negative
  Tensor spatial;  // N x 1
};

/// ReLU(mlp(max over points + mean over points)) as a 1 x C row.
inline Tensor channel_attention(const Tensor& x, std::span<const DenseLayer> mlp) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    throw DimensionError("channel_attention: expected a non-empty N x C matrix, got " +
                         shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  const Tensor pooled = add(pool(x, 0, PoolKind::max), pool(x, 0, PoolKind::avg));
  return relu(shared_mlp(reshape(pooled, {1, c}), mlp));
}

/// max over channels of BN(mlp(x)), one weight per point: N x 1.
inline Tensor spatial_attention(const Tensor& x, std::span<const DenseLayer> mlp, BatchNorm& bn,
                                Mode mode) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    throw DimensionError("spatial_attention: expected a non-empty N x C matrix, got " +
                         shape_str(x.shape()));
  }
  const Tensor normed = bn(shared_mlp(x, mlp), mode);
  return reshape(pool(normed, 1, PoolKind::max), {x.dim(0), 1});
}

/// x scaled per channel and per point.
inline Tensor apply_attention(const Tensor& x, const AttentionWeights& w) {
  if (x.rank() != 2 || w.channel.shape() != Shape{1, x.dim(1)} ||
      w.spatial.shape() != Shape{x.dim(0), 1}) {
    throw DimensionError("apply_attention: weights " + shape_str(w.channel.shape()) + " / " +
                         shape_str(w.spatial.shape()) + " do not fit features " +
                         shape_str(x.shape()));
  }
  return broadcast_mul(broadcast_mul(x, w.channel), w.spatial);
}

}  // namespace pscn
