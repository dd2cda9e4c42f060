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

#include "emil/head.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "emil/ops.hpp"

namespace emil {

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::gated_sigmoid: return "gated_sigmoid";
    case Aggregator::max: return "max";
    case Aggregator::softmax: return "softmax";
  }
  return "unknown";
}

Aggregator aggregator_from_string(const std::string& name) {
  if (name == "gated_sigmoid" || name == "attention") return Aggregator::gated_sigmoid;
  if (name == "max") return Aggregator::max;
  if (name == "softmax") return Aggregator::softmax;
  throw std::invalid_argument("unknown aggregator '" + name +
                              "' (expected gated_sigmoid, max or softmax)");
}

void HeadConfig::validate() const {
  if (kernel.h == 0 || kernel.w == 0) throw std::invalid_argument("head: kernel must be positive");
  if (stride.h == 0 || stride.w == 0) throw std::invalid_argument("head: stride must be positive");
  if (!(k_min >= 0.0) || !std::isfinite(k_min)) {
    throw std::invalid_argument("head: k_min must be a finite non-negative number");
  }
  if (hidden == 0) throw std::invalid_argument("head: hidden width D must be >= 1");
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> HeadParams<T>::named_parameters() const {
  return {{"head.o", o}, {"head.a", a}, {"head.b", b}, {"head.c", c}};
}

template <typename T>
HeadParams<T> init_head(std::size_t channels, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto normal = [&](Shape shape, double std) {
    std::normal_distribution<double> dist(0.0, std);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>(std::move(shape), std::move(v), true);
  };
  const double in_std = 1.0 / std::sqrt(static_cast<double>(channels));
  HeadParams<T> p;
  p.o = normal({channels}, in_std);
  p.a = normal({channels, hidden}, in_std);
  p.b = normal({channels, hidden}, in_std);
  p.c = normal({hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return p;
}

template <typename T>
HeadParams<T> zero_head(std::size_t channels, std::size_t hidden) {
  return {Tensor<T>::zeros({channels}, true), Tensor<T>::zeros({channels, hidden}, true),
          Tensor<T>::zeros({channels, hidden}, true), Tensor<T>::zeros({hidden}, true)};
}

namespace {

template <typename T>
void check_patch_matrix(const Tensor<T>& patches, const char* op) {
  if (patches.rank() != 2) {
    throw ShapeError(std::string(op) + ": patches must be K x C, got " +
                     shape_string(patches.shape()));
  }
}

template <typename T>
Tensor<T> attention_scores(const Tensor<T>& patches, const Tensor<T>& a, const Tensor<T>& b,
                           const Tensor<T>& c, const char* op) {
  check_patch_matrix(patches, op);
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw ShapeError(std::string(op) + ": A and B must both be C x D, got " +
                     shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  if (a.dim(0) != patches.dim(1)) {
    throw ShapeError(std::string(op) + ": A has " + std::to_string(a.dim(0)) +
                     " rows (dim 0) but patches have C = " + std::to_string(patches.dim(1)));
  }
  if (c.rank() != 1 || c.dim(0) != a.dim(1)) {
    throw ShapeError(std::string(op) + ": c must have D = " + std::to_string(a.dim(1)) +
                     " entries, got " + shape_string(c.shape()));
  }
  auto gate = mul(tanh(matmul(patches, a)), sigmoid(matmul(patches, b)));
  return matmul(gate, c);
}

}  // namespace

template <typename T>
Tensor<T> classify_patches(const Tensor<T>& patches, const Tensor<T>& o) {
  check_patch_matrix(patches, "classify_patches");
  if (o.rank() != 1 || o.dim(0) != patches.dim(1)) {
    throw ShapeError("classify_patches: o must have C = " + std::to_string(patches.dim(1)) +
                     " entries (patch dim 1), got " + shape_string(o.shape()));
  }
  return sigmoid(matmul(patches, o));
}

template <typename T>
Tensor<T> attend(const Tensor<T>& patches, const Tensor<T>& a, const Tensor<T>& b,
                 const Tensor<T>& c) {
  return sigmoid(attention_scores(patches, a, b, c, "attend"));
}

template <typename T>
Tensor<T> attend_softmax(const Tensor<T>& patches, const Tensor<T>& a, const Tensor<T>& b,
                         const Tensor<T>& c) {
  return softmax(attention_scores(patches, a, b, c, "attend_softmax"));
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& y_tilde, const Tensor<T>& w, double k_min) {
  if (y_tilde.shape() != w.shape() || y_tilde.rank() != 1) {
    throw ShapeError("aggregate: y_tilde " + shape_string(y_tilde.shape()) + " and w " +
                     shape_string(w.shape()) + " must be vectors of equal length");
  }
  if (k_min < 0.0) throw std::invalid_argument("aggregate: k_min must be non-negative");
  auto num = sum(mul(w, y_tilde));
  auto mass = sum(w);
  if (mass.item() <= T(0) && k_min == 0.0) return scale(num, T(0));
  return div(num, clamp_min(mass, static_cast<T>(k_min)));
}

template <typename T>
Tensor<T> aggregate_max(const Tensor<T>& y_tilde) {
  if (y_tilde.numel() == 0) throw ShapeError("aggregate_max: empty input");
  return max_reduce(y_tilde);
}

// ---------------------------------------------------------------------------
// Plain-value analysis
// ---------------------------------------------------------------------------

double Prediction::attention_mass() const {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

namespace {

void check_pair(std::span<const double> y_tilde, std::span<const double> w, const char* op) {
  if (y_tilde.size() != w.size()) {
    throw std::invalid_argument(std::string(op) + ": y_tilde has " +
                                std::to_string(y_tilde.size()) + " entries, w has " +
                                std::to_string(w.size()));
  }
}

double pooled(double num, double mass, double k_min) {
  const double den = std::max(mass, k_min);
  if (den <= 0.0) return 0.0;
  return num / den;
}

}  // namespace

double aggregate(std::span<const double> y_tilde, std::span<const double> w, double k_min) {
  check_pair(y_tilde, w, "aggregate");
  if (k_min < 0.0) throw std::invalid_argument("aggregate: k_min must be non-negative");
  double num = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    num += w[k] * y_tilde[k];
    mass += w[k];
  }
  return pooled(num, mass, k_min);
}

double group_probability(std::span<const double> y_tilde, std::span<const double> w,
                         std::span<const std::size_t> indices, double k_min) {
  check_pair(y_tilde, w, "group_probability");
  if (indices.empty()) throw std::invalid_argument("group_probability: empty index set");
  std::vector<bool> used(w.size(), false);
  double num = 0.0, mass = 0.0;
  for (auto k : indices) {
    if (k >= w.size()) {
      throw std::out_of_range("group_probability: patch index " + std::to_string(k) +
                              " out of range (K = " + std::to_string(w.size()) + ")");
    }
    if (used[k]) {
      throw std::invalid_argument("group_probability: duplicate patch index " +
                                  std::to_string(k));
    }
    used[k] = true;
    num += w[k] * y_tilde[k];
    mass += w[k];
  }
  return pooled(num, mass, k_min);
}

double removal_delta(std::span<const double> y_tilde, std::span<const double> w, std::size_t i,
                     double k_min) {
  check_pair(y_tilde, w, "removal_delta");
  if (i >= w.size()) {
    throw std::out_of_range("removal_delta: patch index " + std::to_string(i) +
                            " out of range (K = " + std::to_string(w.size()) + ")");
  }
  double num = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    num += w[k] * y_tilde[k];
    mass += w[k];
  }
  const double with = pooled(num, mass, k_min);
  const double without = pooled(num - w[i] * y_tilde[i], mass - w[i], k_min);
  return without - with;
}

double removal_delta_closed_form(std::span<const double> y_tilde, std::span<const double> w,
                                 std::size_t i, double k_min) {
  check_pair(y_tilde, w, "removal_delta_closed_form");
  if (i >= w.size()) throw std::out_of_range("removal_delta_closed_form: index out of range");
  if (k_min <= 0.0) throw std::invalid_argument("removal_delta_closed_form: k_min must be > 0");
  return -w[i] * y_tilde[i] / k_min;
}

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

std::pair<Heatmap, Heatmap> build_heatmaps(const Prediction& prediction, Size2 kernel,
                                           Size2 stride, Size2 feature_extent,
                                           Size2 input_extent) {
  const auto windows = window_grid(feature_extent, kernel, stride);
  if (windows.rows != prediction.rows || windows.cols != prediction.cols ||
      windows.count() != prediction.patch_count() ||
      prediction.w.size() != prediction.y_tilde.size()) {
    throw std::invalid_argument("build_heatmaps: prediction grid " +
                                std::to_string(prediction.rows) + "x" +
                                std::to_string(prediction.cols) + " with K = " +
                                std::to_string(prediction.patch_count()) +
                                " does not match windows " + std::to_string(windows.rows) + "x" +
                                std::to_string(windows.cols) + " over " +
                                to_string(feature_extent));
  }
  if (input_extent.h % feature_extent.h != 0 || input_extent.w % feature_extent.w != 0 ||
      input_extent.h / feature_extent.h != input_extent.w / feature_extent.w) {
    throw std::invalid_argument("build_heatmaps: input " + to_string(input_extent) +
                                " is not a uniform integer multiple of features " +
                                to_string(feature_extent));
  }
  const std::size_t factor = input_extent.h / feature_extent.h;

  Grid<double> prob_sum(feature_extent.h, feature_extent.w, 0.0);
  Grid<double> attn_sum(feature_extent.h, feature_extent.w, 0.0);
  Grid<std::size_t> cover(feature_extent.h, feature_extent.w, 0);
  for (std::size_t p = 0; p < windows.count(); ++p) {
    const auto org = windows.origin(p);
    for (std::size_t dy = 0; dy < kernel.h; ++dy) {
      for (std::size_t dx = 0; dx < kernel.w; ++dx) {
        prob_sum(org.h + dy, org.w + dx) += prediction.y_tilde[p];
        attn_sum(org.h + dy, org.w + dx) += prediction.w[p];
        cover(org.h + dy, org.w + dx) += 1;
      }
    }
  }
  Heatmap prob{HeatmapKind::patch_prob, Grid<double>(feature_extent.h, feature_extent.w), {}};
  Heatmap attn{HeatmapKind::attention, Grid<double>(feature_extent.h, feature_extent.w), {}};
  for (std::size_t i = 0; i < cover.size(); ++i) {
    prob.grid[i] = cover[i] ? prob_sum[i] / static_cast<double>(cover[i]) : 0.0;
    attn.grid[i] = std::min(attn_sum[i], 1.0);
  }
  prob.render = bilinear_upsample(prob.grid, factor);
  attn.render = bilinear_upsample(attn.grid, factor);
  return {std::move(prob), std::move(attn)};
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

template <typename T>
Prediction HeadOutput<T>::prediction() const {
  Prediction p;
  p.y_hat = static_cast<double>(y_hat.item());
  auto yt = y_tilde.values();
  auto wv = w.values();
  p.y_tilde.assign(yt.begin(), yt.end());
  p.w.assign(wv.begin(), wv.end());
  p.rows = rows;
  p.cols = cols;
  p.k_min = k_min;
  return p;
}

template <typename T>
HeadOutput<T> head_forward(const Tensor<T>& features, const HeadParams<T>& head,
                           const HeadConfig& config) {
  if (features.rank() != 3) {
    throw ShapeError("head_forward: features must be C x H x W, got " +
                     shape_string(features.shape()));
  }
  const Size2 extent{features.dim(1), features.dim(2)};
  const auto windows = window_grid(extent, config.kernel, config.stride);
  auto patches = avg_pool_patches(features, config.kernel, config.stride);

  HeadOutput<T> out;
  out.rows = windows.rows;
  out.cols = windows.cols;
  out.feature_extent = extent;
  out.k_min = config.k_min;
  out.y_tilde = classify_patches(patches, head.o);
  switch (config.aggregator) {
    case Aggregator::gated_sigmoid:
      out.w = attend(patches, head.a, head.b, head.c);
      out.y_hat = aggregate(out.y_tilde, out.w, config.k_min);
      break;
    case Aggregator::softmax:
      out.w = attend_softmax(patches, head.a, head.b, head.c);
      out.y_hat = sum(mul(out.w, out.y_tilde));
      out.k_min = 1.0;
      break;
    case Aggregator::max: {
      out.y_hat = aggregate_max(out.y_tilde);
      auto yt = out.y_tilde.values();
      std::vector<T> onehot(yt.size(), T(0));
      onehot[static_cast<std::size_t>(std::max_element(yt.begin(), yt.end()) - yt.begin())] = T(1);
      out.w = Tensor<T>({yt.size()}, std::move(onehot));
      out.k_min = 1.0;
      break;
    }
  }
  return out;
}

template <typename T>
HeadOutput<T> forward(const Tensor<T>& image, const EncoderParams<T>& encoder,
                      const HeadParams<T>& head, const HeadConfig& config) {
  return head_forward(encode(image, encoder), head, config);
}

#define EMIL_INSTANTIATE_HEAD(T)                                                             \
  template struct HeadParams<T>;                                                             \
  template struct HeadOutput<T>;                                                             \
  template HeadParams<T> init_head<T>(std::size_t, std::size_t, std::uint64_t);              \
  template HeadParams<T> zero_head<T>(std::size_t, std::size_t);                             \
  template Tensor<T> classify_patches(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> attend(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                            const Tensor<T>&);                                               \
  template Tensor<T> attend_softmax(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                    const Tensor<T>&);                                       \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, double);                  \
  template Tensor<T> aggregate_max(const Tensor<T>&);                                        \
  template HeadOutput<T> head_forward(const Tensor<T>&, const HeadParams<T>&,                \
                                      const HeadConfig&);                                    \
  template HeadOutput<T> forward(const Tensor<T>&, const EncoderParams<T>&,                  \
                                 const HeadParams<T>&, const HeadConfig&);

EMIL_INSTANTIATE_HEAD(float)
EMIL_INSTANTIATE_HEAD(double)

#undef EMIL_INSTANTIATE_HEAD

}  // namespace emil
