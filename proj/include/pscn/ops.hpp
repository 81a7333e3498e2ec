#pragma once

#include <initializer_list>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pscn/tensor.hpp"

namespace pscn {

enum class Mode { train, eval };
enum class PoolKind { max, avg };

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

/// Matrix product of a (m x k) and b (k x n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return Tensor::from_op({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](detail::Node& self) {
    auto& na = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    const double* G = self.grad.data();
    if (na.requires_grad) {
      na.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.value.data() + p * n;
          const double* grow = G + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          na.grad[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      nb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na.value[i * k + p];
          if (av == 0.0) continue;
          double* gb = nb.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += av * grow[j];
        }
      }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, "add", [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& np = detail::parent(self, p);
      if (!np.requires_grad) continue;
      np.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) np.grad[i] += self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, "mul", [](detail::Node& self) {
    auto& na = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    if (na.requires_grad) {
      na.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.value[i];
    }
  });
}

/// Adds a length-c bias along the last axis of x.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const std::size_t c = bias.dim(0);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return Tensor::from_op(x.shape(), std::move(out), {x, bias}, "add_bias", [c](detail::Node& self) {
    auto& nx = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    if (nx.requires_grad) {
      nx.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i % c] += self.grad[i];
    }
  });
}

/// Elementwise x * w where w is (1 x c), (n x 1) or (n x c) against x (n x c).
inline Tensor broadcast_mul(const Tensor& x, const Tensor& w) {
  detail::require_rank(x, 2, "broadcast_mul");
  detail::require_rank(w, 2, "broadcast_mul");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const bool row_ok = w.dim(0) == n || w.dim(0) == 1;
  const bool col_ok = w.dim(1) == c || w.dim(1) == 1;
  if (!row_ok || !col_ok) {
    throw DimensionError("broadcast_mul: cannot broadcast " + shape_str(w.shape()) + " onto " +
                         shape_str(x.shape()));
  }
  const std::size_t rs = w.dim(0) == 1 ? 0 : w.dim(1);
  const std::size_t cs = w.dim(1) == 1 ? 0 : 1;
  auto widx = [rs, cs](std::size_t i, std::size_t j) { return i * rs + j * cs; };
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * w[widx(i, j)];
  return Tensor::from_op({n, c}, std::move(out), {x, w}, "broadcast_mul",
                         [n, c, widx](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           auto& nw = detail::parent(self, 1);
                           if (nx.requires_grad) nx.ensure_grad();
                           if (nw.requires_grad) nw.ensure_grad();
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t j = 0; j < c; ++j) {
                               const double g = self.grad[i * c + j];
                               if (nx.requires_grad) nx.grad[i * c + j] += g * nw.value[widx(i, j)];
                               if (nw.requires_grad) nw.grad[widx(i, j)] += g * nx.value[i * c + j];
                             }
                           }
                         });
}

inline Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return Tensor::from_op(x.shape(), std::move(out), {x}, "scale", [s](detail::Node& self) {
    auto& nx = detail::parent(self, 0);
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += s * self.grad[i];
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::from_op(x.shape(), std::move(out), {x}, "relu", [](detail::Node& self) {
    auto& nx = detail::parent(self, 0);
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (nx.value[i] > 0.0) nx.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::from_op({}, {s}, {x}, "sum", [](detail::Node& self) {
    auto& nx = detail::parent(self, 0);
    nx.ensure_grad();
    for (double& g : nx.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::from_op(std::move(shape), std::move(out), {x}, "reshape", [](detail::Node& self) {
    auto& nx = detail::parent(self, 0);
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
  });
}

/// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t d = 0; ok && d < ref.size(); ++d) ok = d == axis || p.dim(d) == ref[d];
    if (!ok) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(ref) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  const auto split = detail::split_at(out_shape, axis);
  std::vector<std::size_t> chunk(parts.size()), offset(parts.size());
  std::size_t acc = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    chunk[k] = parts[k].dim(axis) * split.inner;
    offset[k] = acc;
    acc += chunk[k];
  }
  const std::size_t row = acc;
  std::vector<double> out(numel_of(out_shape));
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k].data();
      std::copy_n(src.begin() + o * chunk[k], chunk[k], out.begin() + o * row + offset[k]);
    }
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), parts, "concat",
                         [chunk, offset, row, outer = split.outer](detail::Node& self) {
                           for (std::size_t k = 0; k < chunk.size(); ++k) {
                             auto& np = detail::parent(self, k);
                             if (!np.requires_grad) continue;
                             np.ensure_grad();
                             for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t i = 0; i < chunk[k]; ++i)
                                 np.grad[o * chunk[k] + i] += self.grad[o * row + offset[k] + i];
                           }
                         });
}

/// The sub-range [start, start+length) of x along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                         " out of bounds for " + shape_str(x.shape()));
  }
  const auto split = detail::split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const std::size_t in_row = split.length * split.inner;
  const std::size_t out_row = length * split.inner;
  const std::size_t skip = start * split.inner;
  std::vector<double> out(split.outer * out_row);
  const auto src = x.data();
  for (std::size_t o = 0; o < split.outer; ++o)
    std::copy_n(src.begin() + o * in_row + skip, out_row, out.begin() + o * out_row);
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, "slice",
                         [in_row, out_row, skip, outer = split.outer](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           nx.ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < out_row; ++i)
                               nx.grad[o * in_row + skip + i] += self.grad[o * out_row + i];
                         });
}

/// Reduces `axis` away with max or mean. Max routes gradient to the first argmax.
inline Tensor pool(const Tensor& x, std::size_t axis, PoolKind kind) {
  if (axis >= x.rank()) {
    throw DimensionError("pool: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  const auto s = detail::split_at(x.shape(), axis);
  if (s.length == 0) throw DimensionError("pool: empty axis in " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner);
  const auto src = x.data();
  if (kind == PoolKind::max) {
    std::vector<std::size_t> arg(out.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        std::size_t best = o * s.length * s.inner + i;
        for (std::size_t l = 1; l < s.length; ++l) {
          const std::size_t at = (o * s.length + l) * s.inner + i;
          if (src[at] > src[best]) best = at;
        }
        out[o * s.inner + i] = src[best];
        arg[o * s.inner + i] = best;
      }
    }
    return Tensor::from_op(std::move(out_shape), std::move(out), {x}, "max_pool",
                           [arg = std::move(arg)](detail::Node& self) {
                             auto& nx = detail::parent(self, 0);
                             nx.ensure_grad();
                             for (std::size_t i = 0; i < arg.size(); ++i) nx.grad[arg[i]] += self.grad[i];
                           });
  }
  const double inv = 1.0 / static_cast<double>(s.length);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) acc += src[(o * s.length + l) * s.inner + i];
      out[o * s.inner + i] = acc * inv;
    }
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, "avg_pool",
                         [s, inv](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           nx.ensure_grad();
                           for (std::size_t o = 0; o < s.outer; ++o)
                             for (std::size_t l = 0; l < s.length; ++l)
                               for (std::size_t i = 0; i < s.inner; ++i)
                                 nx.grad[(o * s.length + l) * s.inner + i] +=
                                     self.grad[o * s.inner + i] * inv;
                         });
}

/// Selects rows (slices along axis 0) by index; repeated indices are allowed.
inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows on a scalar");
  const std::size_t width = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  const auto src = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.dim(0)) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           shape_str(x.shape()));
    }
    std::copy_n(src.begin() + rows[r] * width, width, out.begin() + r * width);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, "gather_rows",
                         [idx = std::move(idx), width](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           nx.ensure_grad();
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < width; ++c)
                               nx.grad[idx[r] * width + c] += self.grad[r * width + c];
                         });
}

/// Grid of every (row of x, row of y) pair: out[i][j] = concat(x[i], y[j]).
inline Tensor pairwise_concat(const Tensor& x, const Tensor& y) {
  detail::require_rank(x, 2, "pairwise_concat");
  detail::require_rank(y, 2, "pairwise_concat");
  const std::size_t m = x.dim(0), n = y.dim(0), cx = x.dim(1), cy = y.dim(1), c = cx + cy;
  std::vector<double> out(m * n * c);
  const auto X = x.data();
  const auto Y = y.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* cell = out.data() + (i * n + j) * c;
      std::copy_n(X.begin() + i * cx, cx, cell);
      std::copy_n(Y.begin() + j * cy, cy, cell + cx);
    }
  }
  return Tensor::from_op({m, n, c}, std::move(out), {x, y}, "pairwise_concat",
                         [m, n, cx, cy, c](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           auto& ny = detail::parent(self, 1);
                           if (nx.requires_grad) nx.ensure_grad();
                           if (ny.requires_grad) ny.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < n; ++j) {
                               const double* g = self.grad.data() + (i * n + j) * c;
                               if (nx.requires_grad)
                                 for (std::size_t k = 0; k < cx; ++k) nx.grad[i * cx + k] += g[k];
                               if (ny.requires_grad)
                                 for (std::size_t k = 0; k < cy; ++k) ny.grad[j * cy + k] += g[cx + k];
                             }
                           }
                         });
}

/// Point-wise 2-D convolution: x (h x w x c_in), kernel (1 x 1 x c_in x c_out),
/// optional bias (c_out). Each grid cell is transformed independently.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias = Tensor()) {
  detail::require_rank(x, 3, "conv2d");
  if (kernel.rank() != 4 || kernel.dim(0) != 1 || kernel.dim(1) != 1) {
    throw DimensionError("conv2d: only 1x1 kernels are supported, got " +
                         shape_str(kernel.shape()));
  }
  if (kernel.dim(2) != x.dim(2)) {
    throw DimensionError("conv2d: input channels " + shape_str(x.shape()) +
                         " do not match kernel " + shape_str(kernel.shape()));
  }
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = kernel.dim(3);
  Tensor y = matmul(reshape(x, {h * w, cin}), reshape(kernel, {cin, cout}));
  if (bias.defined()) y = add_bias(y, bias);
  return reshape(y, {h, w, cout});
}

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Batch normalization of x (n x c) over its rows. Train mode normalizes with
/// the batch statistics and folds them into the running buffers; eval mode
/// normalizes with the running buffers.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor& running_mean, Tensor& running_var, Mode mode,
                        BatchNormOptions opt = {}) {
  detail::require_rank(x, 2, "batchnorm");
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw DimensionError("batchnorm: parameter " + shape_str(t->shape()) +
                           " does not match " + shape_str(x.shape()));
    }
  }
  if (n == 0) throw DimensionError("batchnorm: empty batch");
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  const auto X = x.data();
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mu[j] += X[i * c + j];
    for (double& m : mu) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = X[i * c + j] - mu[j];
        var[j] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(n);
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      rm[j] = (1.0 - opt.momentum) * rm[j] + opt.momentum * mu[j];
      rv[j] = (1.0 - opt.momentum) * rv[j] + opt.momentum * var[j] * unbias;
    }
  } else {
    std::copy(running_mean.data().begin(), running_mean.data().end(), mu.begin());
    std::copy(running_var.data().begin(), running_var.data().end(), var.begin());
  }
  std::vector<double> inv_std(c), xhat(n * c), out(n * c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + opt.eps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t at = i * c + j;
      xhat[at] = (X[at] - mu[j]) * inv_std[j];
      out[at] = gamma[j] * xhat[at] + beta[j];
    }
  const bool batch_stats = mode == Mode::train;
  return Tensor::from_op(
      {n, c}, std::move(out), {x, gamma, beta}, "batchnorm",
      [n, c, batch_stats, inv_std = std::move(inv_std), xhat = std::move(xhat)](detail::Node& self) {
        auto& nx = detail::parent(self, 0);
        auto& ng = detail::parent(self, 1);
        auto& nb = detail::parent(self, 2);
        const auto& G = self.grad;
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            sum_g[j] += G[i * c + j];
            sum_gx[j] += G[i * c + j] * xhat[i * c + j];
          }
        if (ng.requires_grad) {
          ng.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) ng.grad[j] += sum_gx[j];
        }
        if (nb.requires_grad) {
          nb.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) nb.grad[j] += sum_g[j];
        }
        if (!nx.requires_grad) return;
        nx.ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t at = i * c + j;
            const double gscale = ng.value[j] * inv_std[j];
            if (batch_stats) {
              nx.grad[at] += gscale * (G[at] - inv_n * sum_g[j] - xhat[at] * inv_n * sum_gx[j]);
            } else {
              nx.grad[at] += gscale * G[at];
            }
          }
        }
      });
}

/// Mean over rows of the negative log-softmax at each row's label.
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "cross_entropy");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) {
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  if (b == 0 || k == 0) throw DimensionError("cross_entropy: empty logits");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw InputError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(k) + ")");
    }
  }
  const auto L = logits.data();
  std::vector<double> softmax(b * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* row = L.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      softmax[r * k + j] = std::exp(row[j] - mx);
      z += softmax[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) softmax[r * k + j] /= z;
    loss += (mx + std::log(z)) - row[labels[r]];
  }
  loss /= static_cast<double>(b);
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor::from_op({}, {loss}, {logits}, "cross_entropy",
                         [b, k, softmax = std::move(softmax), lab = std::move(lab)](detail::Node& self) {
                           auto& nl = detail::parent(self, 0);
                           nl.ensure_grad();
                           const double g = self.grad[0] / static_cast<double>(b);
                           for (std::size_t r = 0; r < b; ++r)
                             for (std::size_t j = 0; j < k; ++j) {
                               const double target = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                               nl.grad[r * k + j] += g * (softmax[r * k + j] - target);
                             }
                         });
}

/// Inverted dropout; the identity outside training or at rate 0.
inline Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, Mode mode) {
  if (mode != Mode::train || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.numel());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = u(rng) < rate ? 0.0 : keep;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor::from_op(x.shape(), std::move(out), {x}, "dropout",
                         [mask = std::move(mask)](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           nx.ensure_grad();
                           for (std::size_t i = 0; i < mask.size(); ++i) nx.grad[i] += self.grad[i] * mask[i];
                         });
}

/// Row-wise weighted combination: out[p] = sum_t weights[p][t] * x[index[p][t]],
/// with `taps` entries per output row stored contiguously.
inline Tensor weighted_rows(const Tensor& x, std::span<const std::size_t> index,
                            std::span<const double> weights, std::size_t taps) {
  detail::require_rank(x, 2, "weighted_rows");
  if (taps == 0 || index.size() != weights.size() || index.size() % taps != 0) {
    throw DimensionError("weighted_rows: index/weight layout does not match tap count");
  }
  const std::size_t rows = index.size() / taps, c = x.dim(1);
  std::vector<double> out(rows * c, 0.0);
  const auto X = x.data();
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t t = 0; t < taps; ++t) {
      const std::size_t src = index[p * taps + t];
      if (src >= x.dim(0)) throw DimensionError("weighted_rows: source row out of range");
      const double w = weights[p * taps + t];
      for (std::size_t j = 0; j < c; ++j) out[p * c + j] += w * X[src * c + j];
    }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> wts(weights.begin(), weights.end());
  return Tensor::from_op({rows, c}, std::move(out), {x}, "weighted_rows",
                         [rows, c, taps, idx = std::move(idx), wts = std::move(wts)](detail::Node& self) {
                           auto& nx = detail::parent(self, 0);
                           nx.ensure_grad();
                           for (std::size_t p = 0; p < rows; ++p)
                             for (std::size_t t = 0; t < taps; ++t) {
                               const std::size_t src = idx[p * taps + t];
                               const double w = wts[p * taps + t];
                               for (std::size_t j = 0; j < c; ++j)
                                 nx.grad[src * c + j] += w * self.grad[p * c + j];
                             }
                         });
}

}  // namespace pscn
