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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emil/grid.hpp"
#include "emil/head.hpp"
#include "emil/tensor.hpp"

namespace emil {

inline constexpr double kLogEpsilon = 1e-7;
inline constexpr double kAlphaCap = 1e4;

enum class MaskSource { ground_truth, teacher_sim };

struct MaskLabel {
  std::optional<Mask> mask;
  MaskSource source = MaskSource::ground_truth;
  int image_label = 0;
};

/// Block max-pooling of an input-resolution mask down to the feature extent
/// (a block is positive if any of its pixels is).
Mask downscale_mask(const Mask& mask, Size2 feature_extent);

/// Patch labels aligned with the head's patch order: downscale to the
/// feature extent, max-pool with the head's (kernel, stride), vectorise.
std::vector<std::uint8_t> patch_labels(const Mask& mask, Size2 feature_extent, Size2 kernel,
                                       Size2 stride);

/// Drops masks that contradict the image label. A positive image with an
/// empty mask yields nullopt. A negative image yields an all-zero mask when
/// `use_negative_masks` is set, else nullopt.
std::optional<Mask> filter_mask(const std::optional<Mask>& mask, int image_label,
                                bool use_negative_masks);

/// Simulated teacher errors: dilation, then erosion (square structuring
/// element of the given radius), then dropping the whole mask with
/// probability `drop_p`.
struct MaskCorruption {
  std::size_t dilate = 0;
  std::size_t erode = 0;
  double drop_p = 0.0;

  bool active() const { return dilate > 0 || erode > 0 || drop_p > 0.0; }
};

std::optional<Mask> corrupt_mask(const Mask& mask, const MaskCorruption& corruption,
                                 std::mt19937_64& rng);

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;

  /// n / (2 n_c) per class, from the training labels.
  static ClassWeights inverse_frequency(std::span<const int> labels);
};

/// Weighted binary cross-entropy on the image prediction (log arguments
/// clamped to [1e-7, 1 - 1e-7]).
template <typename T>
Tensor<T> image_loss(const Tensor<T>& y_hat, int y, ClassWeights weights = {});

/// Mean per-patch binary cross-entropy.
template <typename T>
Tensor<T> patch_loss(const Tensor<T>& y_tilde, std::span<const std::uint8_t> labels);

template <typename T>
struct PartialLoss {
  std::string name;
  Tensor<T> value;
};

template <typename T>
struct CompoundLoss {
  Tensor<T> total;
  std::vector<double> values;
  std::vector<double> alpha;
};

/// L = sum_i alpha_i l_i with alpha_i = max_j l_j / l_i frozen as constants
/// (capped at kAlphaCap). All-zero losses give alpha = 1 and L = 0.
template <typename T>
CompoundLoss<T> compound_loss(std::span<const PartialLoss<T>> losses);

/// Same as compound_loss but with externally supplied constant weights.
template <typename T>
Tensor<T> weighted_loss(std::span<const PartialLoss<T>> losses, std::span<const double> alpha);

struct LossReport {
  double l_image = 0.0;
  std::optional<double> l_patch;
  std::vector<double> alpha;
  double total = 0.0;
  ClassWeights class_weights;
};

/// Supervision for one image: its label and, when usable, its patch labels.
struct TrainingTarget {
  int label = 0;
  std::optional<std::vector<std::uint8_t>> patch_labels;
};

template <typename T>
struct TrainingLoss {
  Tensor<T> total;
  LossReport report;
};

/// Image loss alone, or the compound of image and patch losses when patch
/// labels are present.
template <typename T>
TrainingLoss<T> training_loss(const HeadOutput<T>& output, const TrainingTarget& target,
                              ClassWeights weights = {});

}  // namespace emil
