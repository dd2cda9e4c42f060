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

#include "emil/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "emil/ops.hpp"

namespace emil {

Mask downscale_mask(const Mask& mask, Size2 feature_extent) {
  if (feature_extent.h == 0 || feature_extent.w == 0 || mask.rows() % feature_extent.h != 0 ||
      mask.cols() % feature_extent.w != 0) {
    throw std::invalid_argument("downscale_mask: mask " + to_string(mask.extent()) +
                                " is not an integer multiple of the feature extent " +
                                to_string(feature_extent));
  }
  const std::size_t bh = mask.rows() / feature_extent.h;
  const std::size_t bw = mask.cols() / feature_extent.w;
  Mask out(feature_extent.h, feature_extent.w, 0);
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      const auto v = mask(r, c);
      if (v > 1) throw std::invalid_argument("downscale_mask: mask is not binary");
      if (v) out(r / bh, c / bw) = 1;
    }
  }
  return out;
}

std::vector<std::uint8_t> patch_labels(const Mask& mask, Size2 feature_extent, Size2 kernel,
                                       Size2 stride) {
  return max_pool2d(downscale_mask(mask, feature_extent), kernel, stride);
}

std::optional<Mask> filter_mask(const std::optional<Mask>& mask, int image_label,
                                bool use_negative_masks) {
  if (!mask) return std::nullopt;
  if (image_label == 1) {
    if (!any_positive(*mask)) return std::nullopt;
    return mask;
  }
  if (!use_negative_masks) return std::nullopt;
  return Mask(mask->rows(), mask->cols(), 0);
}

namespace {

Mask morph(const Mask& m, std::size_t radius, bool dilate) {
  if (radius == 0) return m;
  Mask out(m.rows(), m.cols(), 0);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  const auto cols = static_cast<std::ptrdiff_t>(m.cols());
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    for (std::ptrdiff_t x = 0; x < cols; ++x) {
      bool any = false, all = true;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const auto yy = y + dy, xx = x + dx;
          const bool v = yy >= 0 && yy < rows && xx >= 0 && xx < cols &&
                         m(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = (dilate ? any : all) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

std::optional<Mask> corrupt_mask(const Mask& mask, const MaskCorruption& corruption,
                                 std::mt19937_64& rng) {
  if (corruption.drop_p < 0.0 || corruption.drop_p > 1.0) {
    throw std::invalid_argument("corrupt_mask: drop probability must lie in [0, 1]");
  }
  Mask out = morph(mask, corruption.dilate, true);
  out = morph(out, corruption.erode, false);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (corruption.drop_p > 0.0 && u(rng) < corruption.drop_p) return std::nullopt;
  return out;
}

ClassWeights ClassWeights::inverse_frequency(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  const std::size_t neg = labels.size() - pos;
  ClassWeights w;
  const double n = static_cast<double>(labels.size());
  if (pos > 0) w.positive = n / (2.0 * static_cast<double>(pos));
  if (neg > 0) w.negative = n / (2.0 * static_cast<double>(neg));
  return w;
}

template <typename T>
Tensor<T> image_loss(const Tensor<T>& y_hat, int y, ClassWeights weights) {
  if (y != 0 && y != 1) throw std::invalid_argument("image_loss: label must be 0 or 1");
  const T eps = static_cast<T>(kLogEpsilon);
  auto p = clamp(y_hat, eps, T(1) - eps);
  if (y == 1) return scale(log(p), static_cast<T>(-weights.positive));
  return scale(log(add_scalar(scale(p, T(-1)), T(1))), static_cast<T>(-weights.negative));
}

template <typename T>
Tensor<T> patch_loss(const Tensor<T>& y_tilde, std::span<const std::uint8_t> labels) {
  if (y_tilde.numel() != labels.size()) {
    throw std::invalid_argument("patch_loss: " + std::to_string(y_tilde.numel()) +
                                " patch predictions but " + std::to_string(labels.size()) +
                                " patch labels");
  }
  const T eps = static_cast<T>(kLogEpsilon);
  // -[y log p + (1 - y) log(1 - p)] == -log(y p + (1 - y)(1 - p)) for binary y
  std::vector<T> sign(labels.size()), offset(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] > 1) throw std::invalid_argument("patch_loss: labels must be binary");
    sign[k] = labels[k] ? T(1) : T(-1);
    offset[k] = labels[k] ? T(0) : T(1);
  }
  auto p = clamp(y_tilde, eps, T(1) - eps);
  auto q = add(mul(p, Tensor<T>(p.shape(), std::move(sign))),
               Tensor<T>(p.shape(), std::move(offset)));
  return scale(mean(log(q)), T(-1));
}

template <typename T>
Tensor<T> weighted_loss(std::span<const PartialLoss<T>> losses, std::span<const double> alpha) {
  if (losses.empty()) throw std::invalid_argument("weighted_loss: no partial losses");
  if (alpha.size() != losses.size()) {
    throw std::invalid_argument("weighted_loss: alpha/loss count mismatch");
  }
  Tensor<T> total = scale(losses[0].value, static_cast<T>(alpha[0]));
  for (std::size_t i = 1; i < losses.size(); ++i) {
    total = add(total, scale(losses[i].value, static_cast<T>(alpha[i])));
  }
  return total;
}

template <typename T>
CompoundLoss<T> compound_loss(std::span<const PartialLoss<T>> losses) {
  if (losses.empty()) throw std::invalid_argument("compound_loss: no partial losses");
  CompoundLoss<T> out;
  double largest = 0.0;
  for (const auto& l : losses) {
    const double v = static_cast<double>(l.value.item());
    if (v < 0.0) throw std::invalid_argument("compound_loss: partial loss '" + l.name +
                                             "' is negative");
    out.values.push_back(v);
    largest = std::max(largest, v);
  }
  for (double v : out.values) {
    if (largest == 0.0) {
      out.alpha.push_back(1.0);
    } else if (v == 0.0) {
      out.alpha.push_back(kAlphaCap);
    } else {
      out.alpha.push_back(std::min(largest / v, kAlphaCap));
    }
  }
  out.total = weighted_loss<T>(losses, out.alpha);
  return out;
}

template <typename T>
TrainingLoss<T> training_loss(const HeadOutput<T>& output, const TrainingTarget& target,
                              ClassWeights weights) {
  std::vector<PartialLoss<T>> parts;
  parts.push_back({"image", image_loss(output.y_hat, target.label, weights)});
  if (target.patch_labels) {
    parts.push_back({"patch", patch_loss(output.y_tilde, *target.patch_labels)});
  }
  auto compound = compound_loss<T>(parts);
  TrainingLoss<T> out;
  out.total = compound.total;
  out.report.l_image = compound.values[0];
  if (compound.values.size() > 1) out.report.l_patch = compound.values[1];
  out.report.alpha = compound.alpha;
  out.report.total = static_cast<double>(compound.total.item());
  out.report.class_weights = weights;
  return out;
}

#define EMIL_INSTANTIATE_GUIDANCE(T)                                                         \
  template Tensor<T> image_loss(const Tensor<T>&, int, ClassWeights);                        \
  template Tensor<T> patch_loss(const Tensor<T>&, std::span<const std::uint8_t>);            \
  template Tensor<T> weighted_loss(std::span<const PartialLoss<T>>, std::span<const double>); \
  template CompoundLoss<T> compound_loss(std::span<const PartialLoss<T>>);                   \
  template TrainingLoss<T> training_loss(const HeadOutput<T>&, const TrainingTarget&,        \
                                         ClassWeights);

EMIL_INSTANTIATE_GUIDANCE(float)
EMIL_INSTANTIATE_GUIDANCE(double)

#undef EMIL_INSTANTIATE_GUIDANCE

}  // namespace emil
