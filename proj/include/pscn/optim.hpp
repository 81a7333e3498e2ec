#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pscn/tensor.hpp"

namespace pscn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to the gradient
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  AdamOptions options;

  static AdamState for_params(std::span<const Tensor> params, AdamOptions opt = {}) {
    AdamState s;
    s.options = opt;
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.numel(), 0.0);
      s.second_moment.emplace_back(p.numel(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update of every parameter from its current gradient.
inline void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("adam_step: state was built for " +
                        std::to_string(state.first_moment.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(k) + " has no gradient");
    }
    if (state.first_moment[k].size() != params[k].numel()) {
      throw ContractError("adam_step: moment shape mismatch for parameter " + std::to_string(k));
    }
  }
  const auto& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].mutable_data();
    const auto g = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + o.weight_decay * w[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      w[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
    }
  }
}

}  // namespace pscn
