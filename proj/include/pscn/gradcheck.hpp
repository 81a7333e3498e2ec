#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pscn/nn.hpp"

namespace pscn {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// near-zero gradients from turning rounding noise into large ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst;  // "<tensor>[<index>]"
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every scalar of every
/// listed tensor. `loss` must rebuild the graph from the current values.
inline GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                       std::span<NamedTensor> tensors, double step = 1e-4) {
  for (auto& t : tensors) t.tensor.clear_grad();
  loss().backward();
  GradCheckReport report;
  for (auto& t : tensors) {
    if (!t.tensor.has_grad()) t.tensor.zero_grad();
    const std::vector<double> analytic(t.tensor.grad().begin(), t.tensor.grad().end());
    auto values = t.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      const double err = relative_error(analytic[i], (up - down) / (2.0 * step));
      ++report.checked;
      if (report.worst.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace pscn
