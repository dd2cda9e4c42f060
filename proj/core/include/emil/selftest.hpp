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

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "emil/gradcheck.hpp"

namespace emil {

struct GradCheckCase {
  std::string name;
  std::size_t instance = 0;
  GradCheckResult result;
};

/// Finite-difference checks (f64, central differences) of conv2d,
/// batch_norm2d, select, avg_pool_patches, bilinear_upsample, the full head
/// and the training loss on `instances` random problems each.
std::vector<GradCheckCase> gradient_suite(std::uint64_t seed, std::size_t instances,
                                          double eps = 1e-5);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Oracle comparisons and invariant checks over every module. Fast enough to
/// run on every invocation of the `selftest` command.
std::vector<CheckOutcome> run_selftest(std::uint64_t seed);

}  // namespace emil
