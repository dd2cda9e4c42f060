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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emil/tensor.hpp"

namespace emil {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// "input[i][j]" of the worst entry.
  std::string worst;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

using GradProgram = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of a scalar program against central
/// differences for every entry of every input with requires_grad set.
///
/// Error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Throws std::invalid_argument for eps outside [1e-6, 1e-3] and
/// std::domain_error when the program yields a non-finite value.
GradCheckResult grad_check(const GradProgram& program, const std::vector<Tensor<double>>& inputs,
                           double eps = 1e-5);

}  // namespace emil
