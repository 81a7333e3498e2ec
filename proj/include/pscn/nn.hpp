#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pscn/ops.hpp"

namespace pscn {

using Rng = std::mt19937_64;

enum class Activation { none, relu };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) leaf tensor.
inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

/// Fully connected layer applied row-wise: y = act(x W + b), W is (in x out).
struct DenseLayer {
  Tensor weight;
  Tensor bias;  // may be undefined
  Activation activation = Activation::relu;

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }

  static DenseLayer create(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.weight = init_uniform({in, out}, in, rng);
    layer.bias = init_uniform({out}, in, rng);
    layer.activation = act;
    return layer;
  }
};

inline Tensor dense(const Tensor& x, const DenseLayer& layer) {
  Tensor y = matmul(x, layer.weight);
  if (layer.bias.defined()) y = add_bias(y, layer.bias);
  return layer.activation == Activation::relu ? relu(y) : y;
}

/// Applies the same layer stack to every row of x (n x c_in).
inline Tensor shared_mlp(const Tensor& x, std::span<const DenseLayer> layers) {
  if (layers.empty()) throw ConfigError("shared_mlp: empty layer list");
  Tensor y = x;
  for (const auto& layer : layers) y = dense(y, layer);
  return y;
}

// Stack of `widths` ReLU layers starting from `in` channels.
inline std::vector<DenseLayer> make_mlp(std::size_t in, std::span<const std::size_t> widths,
                                        Rng& rng, Activation last = Activation::relu) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto act = i + 1 == widths.size() ? last : Activation::relu;
    layers.push_back(DenseLayer::create(in, widths[i], act, rng));
    in = widths[i];
  }
  return layers;
}

/// 1x1 convolution over a (h x w x c) grid.
struct Conv2dLayer {
  Tensor kernel;  // 1 x 1 x in x out
  Tensor bias;
  Activation activation = Activation::relu;

  std::size_t in_channels() const { return kernel.dim(2); }
  std::size_t out_channels() const { return kernel.dim(3); }

  static Conv2dLayer create(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    return {init_uniform({1, 1, in, out}, in, rng), init_uniform({out}, in, rng), act};
  }
};

inline Tensor apply(const Tensor& x, const Conv2dLayer& layer) {
  Tensor y = conv2d(x, layer.kernel, layer.bias);
  return layer.activation == Activation::relu ? relu(y) : y;
}

struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  BatchNormOptions options;

  static BatchNorm create(std::size_t channels, BatchNormOptions opt = {}) {
    return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
            Tensor::zeros({channels}), Tensor::full({channels}, 1.0), opt};
  }

  Tensor operator()(const Tensor& x, Mode mode) {
    return batchnorm(x, gamma, beta, running_mean, running_var, mode, options);
  }
};

inline void collect(std::vector<NamedTensor>& out, const std::string& prefix,
                    std::span<const DenseLayer> layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    out.push_back({p + ".weight", layers[i].weight});
    if (layers[i].bias.defined()) out.push_back({p + ".bias", layers[i].bias});
  }
}

inline void collect(std::vector<NamedTensor>& out, const std::string& prefix,
                    std::span<const Conv2dLayer> layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    out.push_back({p + ".kernel", layers[i].kernel});
    if (layers[i].bias.defined()) out.push_back({p + ".bias", layers[i].bias});
  }
}

}  // namespace pscn
