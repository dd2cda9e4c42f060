// Copyright 2026 The emil Authors
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

#include "emil/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emil {

namespace {

double evaluate(const GradProgram& program, const std::vector<Tensor<double>>& inputs) {
  NoGradGuard no_grad;
  double v = program(inputs).item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: program produced a non-finite value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const GradProgram& program, const std::vector<Tensor<double>>& inputs,
                           double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  auto params = inputs;
  for (auto& p : params) p.zero_grad();
  auto out = program(params);
  if (!std::isfinite(out.item())) {
    throw std::domain_error("grad_check: program produced a non-finite value");
  }
  out.backward();

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.requires_grad()) continue;
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) {
      auto g = p.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    auto values = p.mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (!std::isfinite(analytic[j])) {
        throw std::domain_error("grad_check: non-finite analytic gradient");
      }
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = evaluate(program, params);
      values[j] = saved - eps;
      const double down = evaluate(program, params);
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(analytic[j]), std::abs(numeric)});
      const double err = std::abs(analytic[j] - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error || result.worst.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst = "input[" + std::to_string(i) + "][" + std::to_string(j) + "]";
        }
      }
    }
  }
  return result;
}

}  // namespace emil
