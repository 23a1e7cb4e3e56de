#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "specmon/neural/params.hpp"

namespace specmon::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares analytic gradients against central differences.
//
// `loss_fn(params, want_grad)` must return the scalar loss and, when
// want_grad is true, leave dL/dparams in params.grads() (the checker zeroes
// them first). Relative error uses max(|a|, |n|, floor) as denominator so
// parameters the loss ignores compare as 0 against 0.
template <typename LossFn>
GradCheckResult grad_check(Params<double>& params, LossFn&& loss_fn, double eps = 1e-4, double floor = 1e-6) {
  params.zero_grad();
  loss_fn(params, true);
  const std::vector<double> analytic(params.grads().begin(), params.grads().end());

  GradCheckResult result;
  auto values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = loss_fn(params, false);
    values[i] = saved - eps;
    const double down = loss_fn(params, false);
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    ++result.checked;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
      result.worst_block = params.block_of(i).name;
    }
  }
  return result;
}

}  // namespace specmon::nn
