// Copyright 2026 The prosparse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosparse/autodiff/tensor.hpp"

namespace prosparse::ad {

struct GradCheckOptions {
  double epsilon = 1e-6;
  /// Denominator floor, so coordinates whose true gradient is ~0 are judged
  /// by absolute error instead of amplified round-off.
  double floor = 1e-6;
  /// Coordinates checked per tensor; 0 checks all of them.
  std::size_t max_coords = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]" of the worst coordinate
  std::size_t checked = 0;
};

/// Compares the analytic gradient of `loss_fn` (a deterministic scalar
/// graph over `params`) with central differences
/// (f(x+eps) - f(x-eps)) / 2 eps, coordinate by coordinate.
inline GradCheckResult finite_difference_check(const std::function<Tensor()>& loss_fn,
                                               std::vector<std::pair<std::string, Tensor>> params,
                                               const GradCheckOptions& opts = {}) {
  if (!(opts.epsilon > 0)) throw std::invalid_argument("finite difference epsilon must be positive");
  for (auto& [name, p] : params) p.zero_grad();
  {
    Tensor loss = loss_fn();
    loss.backward();
  }
  auto eval = [&] {
    NoGradGuard guard;
    return loss_fn().item();
  };
  const double base = eval();
  if (eval() != base) throw std::invalid_argument("finite difference check: loss is not deterministic");

  GradCheckResult result;
  for (auto& [name, p] : params) {
    auto val = p.values();
    std::vector<double> analytic(p.grads().begin(), p.grads().end());
    const std::size_t n = val.size();
    const std::size_t step = (opts.max_coords == 0 || n <= opts.max_coords) ? 1 : n / opts.max_coords;
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = val[i];
      val[i] = saved + opts.epsilon;
      const double up = eval();
      val[i] = saved - opts.epsilon;
      const double down = eval();
      val[i] = saved;
      const double numeric = (up - down) / (2 * opts.epsilon);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace prosparse::ad
