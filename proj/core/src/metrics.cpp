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

#include "emil/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace emil {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Indices sorted by descending score; equal scores stay adjacent.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const auto order = descending(scores);
  // Walk thresholds from high to low; each tie block is one diagonal segment.
  double area = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, dtp = 0, dfp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? dtp : dfp) += 1;
      ++j;
    }
    area += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dtp));
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0 || pos == labels.size()) return std::nullopt;
  const auto order = descending(scores);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = ratio(tp, pos);
    const double precision = ratio(tp, tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold) {
  check_inputs(scores, labels);
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("metrics: scores must lie in [0, 1]");
  }
  MetricsReport r;
  r.threshold = threshold;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  r.n_pos = tp + fn;
  r.n_neg = tn + fp;
  r.sensitivity = ratio(tp, tp + fn);
  r.specificity = ratio(tn, tn + fp);
  r.balanced_accuracy = 0.5 * (r.sensitivity + r.specificity);
  const double precision = ratio(tp, tp + fp);
  r.f_score = (precision + r.sensitivity) > 0.0
                  ? 2.0 * precision * r.sensitivity / (precision + r.sensitivity)
                  : 0.0;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  return r;
}

std::vector<std::size_t> top_k_pixels(const Grid<double>& values, std::size_t k) {
  if (k > values.size()) throw std::invalid_argument("top_k_pixels: k exceeds pixel count");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(k);
  return order;
}

std::optional<double> iou_localization(const Grid<double>& render, const Mask& mask, IouMode mode,
                                       double y_hat, double conf) {
  if (render.extent() != mask.extent()) {
    throw std::invalid_argument("iou_localization: render " + to_string(render.extent()) +
                                " and mask " + to_string(mask.extent()) + " differ");
  }
  const std::size_t area = count_positive(mask);
  if (area == 0) throw std::invalid_argument("iou_localization: mask has no positive pixel");
  if (mode == IouMode::at_conf && y_hat < conf) return std::nullopt;
  const auto picked = top_k_pixels(render, area);
  std::size_t inter = 0;
  for (auto i : picked) inter += mask[i] != 0;
  const std::size_t uni = 2 * area - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace emil
