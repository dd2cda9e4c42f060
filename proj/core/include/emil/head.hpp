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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emil/encoder.hpp"
#include "emil/grid.hpp"
#include "emil/tensor.hpp"

namespace emil {

/// How patch predictions are pooled into the image prediction.
enum class Aggregator {
  gated_sigmoid,  // independent sigmoid-gated weights, K_min-clamped denominator
  max,            // max over patch probabilities
  softmax,        // gated attention with a softmax outer function (weights sum to 1)
};

std::string to_string(Aggregator a);
Aggregator aggregator_from_string(const std::string& name);

struct HeadConfig {
  Size2 kernel{1, 1};
  Size2 stride{1, 1};
  double k_min = 1.0;
  std::size_t hidden = 64;
  Aggregator aggregator = Aggregator::gated_sigmoid;

  void validate() const;
  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Patch classifier `o` (C) and the two attention branches `a`, `b` (C x D)
/// projected by `c` (D). The branches carry no biases.
template <typename T>
struct HeadParams {
  Tensor<T> o;
  Tensor<T> a;
  Tensor<T> b;
  Tensor<T> c;

  std::size_t channels() const { return o.dim(0); }
  std::size_t hidden() const { return c.dim(0); }
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
};

template <typename T>
HeadParams<T> init_head(std::size_t channels, std::size_t hidden, std::uint64_t seed);

template <typename T>
HeadParams<T> zero_head(std::size_t channels, std::size_t hidden);

template <typename To, typename From>
HeadParams<To> precision_cast(const HeadParams<From>& p) {
  return {precision_cast<To>(p.o), precision_cast<To>(p.a), precision_cast<To>(p.b),
          precision_cast<To>(p.c)};
}

// ---------------------------------------------------------------------------
// Differentiable head pieces
// ---------------------------------------------------------------------------

/// y~_k = sigmoid((P o)_k) for the K x C patch matrix P.
template <typename T>
Tensor<T> classify_patches(const Tensor<T>& patches, const Tensor<T>& o);

/// w = sigmoid((tanh(P A) * sigmoid(P B)) c). Each weight depends on its own
/// row only; no normalisation across patches.
template <typename T>
Tensor<T> attend(const Tensor<T>& patches, const Tensor<T>& a, const Tensor<T>& b,
                 const Tensor<T>& c);

/// Same scores as attend() but normalised with a softmax over patches.
template <typename T>
Tensor<T> attend_softmax(const Tensor<T>& patches, const Tensor<T>& a, const Tensor<T>& b,
                         const Tensor<T>& c);

/// y^ = sum_k w_k y~_k / max(sum_k w_k, k_min). With k_min = 0 and sum w = 0
/// the result is defined as 0.
template <typename T>
Tensor<T> aggregate(const Tensor<T>& y_tilde, const Tensor<T>& w, double k_min);

template <typename T>
Tensor<T> aggregate_max(const Tensor<T>& y_tilde);

// ---------------------------------------------------------------------------
// Prediction analysis (plain values)
// ---------------------------------------------------------------------------

struct Prediction {
  double y_hat = 0.0;
  std::vector<double> y_tilde;
  std::vector<double> w;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double k_min = 1.0;

  std::size_t patch_count() const { return y_tilde.size(); }
  double attention_mass() const;
};

double aggregate(std::span<const double> y_tilde, std::span<const double> w, double k_min);

/// aggregate() restricted to `indices` in numerator and denominator.
double group_probability(std::span<const double> y_tilde, std::span<const double> w,
                         std::span<const std::size_t> indices, double k_min);

/// Exact change of y^ when patch i is removed: aggregate(without i) - aggregate(all).
double removal_delta(std::span<const double> y_tilde, std::span<const double> w, std::size_t i,
                     double k_min);

/// -w_i y~_i / k_min. Equals removal_delta() whenever sum_k w_k <= k_min.
double removal_delta_closed_form(std::span<const double> y_tilde, std::span<const double> w,
                                 std::size_t i, double k_min);

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

enum class HeatmapKind { patch_prob, attention };

struct Heatmap {
  HeatmapKind kind = HeatmapKind::patch_prob;
  Grid<double> grid;    // feature-map resolution
  Grid<double> render;  // input resolution
};

/// Paints patch values onto the feature grid and renders them at input size.
/// Overlapping attention weights are summed then clipped at 1; overlapping
/// probabilities are averaged. Cells covered by no patch stay 0.
std::pair<Heatmap, Heatmap> build_heatmaps(const Prediction& prediction, Size2 kernel,
                                           Size2 stride, Size2 feature_extent,
                                           Size2 input_extent);

// ---------------------------------------------------------------------------
// Full forward pass
// ---------------------------------------------------------------------------

template <typename T>
struct HeadOutput {
  Tensor<T> y_hat;    // scalar
  Tensor<T> y_tilde;  // K
  Tensor<T> w;        // K
  std::size_t rows = 0;
  std::size_t cols = 0;
  Size2 feature_extent;
  double k_min = 1.0;

  Prediction prediction() const;
};

/// Patch extraction, classification, weighting and pooling on a feature map U.
template <typename T>
HeadOutput<T> head_forward(const Tensor<T>& features, const HeadParams<T>& head,
                           const HeadConfig& config);

/// encode() followed by head_forward().
template <typename T>
HeadOutput<T> forward(const Tensor<T>& image, const EncoderParams<T>& encoder,
                      const HeadParams<T>& head, const HeadConfig& config);

}  // namespace emil
