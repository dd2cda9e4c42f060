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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "emil/grid.hpp"

namespace emil {

struct MetricsReport {
  double balanced_accuracy = 0.0;
  double f_score = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::optional<double> roc_auc;  // absent for single-class input
  std::optional<double> pr_auc;
  std::optional<double> iou_at_0;
  std::optional<double> iou_at_conf;
  double threshold = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Threshold metrics (score >= threshold predicts positive) plus ROC and PR
/// AUC. Rates with an empty denominator are reported as 0.
MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = 0.5);

/// Trapezoidal area under the exact ROC step curve; tied scores contribute
/// half a concordant pair.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct score thresholds of
/// (recall_n - recall_{n-1}) * precision_n.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels);

/// Indices (row-major) of the k largest values; ties resolve to the lower index.
std::vector<std::size_t> top_k_pixels(const Grid<double>& values, std::size_t k);

enum class IouMode { at0, at_conf };

/// Top-k binarisation IoU: the |mask| highest pixels of the render are set
/// to 1 and compared with the mask. In at_conf mode, images with
/// y_hat < conf are skipped (nullopt). Throws for an empty mask.
std::optional<double> iou_localization(const Grid<double>& render, const Mask& mask, IouMode mode,
                                       double y_hat, double conf = 0.95);

}  // namespace emil
