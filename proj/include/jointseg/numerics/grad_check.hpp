#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "jointseg/numerics/tensor.hpp"

namespace jointseg::numerics {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares backprop gradients against central differences, coordinate by
// coordinate. `objective` must return the scalar loss and, as a side effect,
// accumulate its gradient into the grads of `params`. The relative error of a
// coordinate is |g - g_fd| / max(|g|, |g_fd|, 1e-8).
inline GradCheckReport grad_check(const std::function<double()>& objective,
                                  std::span<Parameter<double>* const> params,
                                  double eps = 1e-5) {
  auto evaluate = [&] {
    for (auto* p : params) p->zero_grad();
    const double f = objective();
    if (!std::isfinite(f)) throw NumericError("grad_check: objective is not finite");
    return f;
  };

  evaluate();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi]->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double g = analytic[pi][i];
      const double denom = std::max({std::abs(g), std::abs(numeric), 1e-8});
      const double rel = std::abs(g - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
        report.worst_analytic = g;
        report.worst_numeric = numeric;
      }
    }
  }
  // Leave the analytic gradient in place for the caller.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return report;
}

}  // namespace jointseg::numerics
