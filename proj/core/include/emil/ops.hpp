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
#include <span>

#include "emil/grid.hpp"
#include "emil/tensor.hpp"

namespace emil {

// ---------------------------------------------------------------------------
// Sliding windows
// ---------------------------------------------------------------------------

/// Window layout of a (kernel, stride) sweep over an extent. Windows are
/// enumerated row-major over their origins; both avg_pool_patches and
/// max_pool2d use this enumeration so patch k and label k share a window.
struct WindowGrid {
  Size2 input;
  Size2 kernel;
  Size2 stride;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const { return rows * cols; }
  /// Top-left corner (row, col) of window k.
  Size2 origin(std::size_t k) const {
    return {(k / cols) * stride.h, (k % cols) * stride.w};
  }
};

WindowGrid window_grid(Size2 input, Size2 kernel, Size2 stride);

// ---------------------------------------------------------------------------
// Elementwise and reductions
// ---------------------------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);

/// Clamp into [lo, hi]; gradient passes where lo <= a <= hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
/// max(a, floor) elementwise. Gradient reaches `a` only where a > floor
/// strictly; at equality the constant branch is active.
template <typename T> Tensor<T> clamp_min(const Tensor<T>& a, T floor);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// Maximum element; the gradient goes to the lowest flat index attaining it.
template <typename T> Tensor<T> max_reduce(const Tensor<T>& a);
/// Softmax over all elements of a vector.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// (m x k) * (k x n) -> (m x n), or (m x k) * (k) -> (m).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x (m x k) * weight (k x n) + bias (n) -> (m x n). `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

/// NCHW cross-correlation. weight is C_out x C_in x k_h x k_w; bias has
/// C_out entries or is undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Size2 stride = {1, 1}, Size2 padding = {0, 0});

/// Per-channel batch normalisation of an N x C x H x W tensor. In training
/// mode the batch statistics (biased variance) normalise the input and the
/// running estimates are updated in place with the unbiased variance; in
/// inference mode the running estimates are used.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T> running_mean, Tensor<T> running_var, bool training,
                       double momentum = 0.1, double eps = 1e-5);

/// Slice `index` along the leading axis (drops that axis).
template <typename T>
Tensor<T> select(const Tensor<T>& a, std::size_t index);

/// Average-pools every (kernel, stride) window of a C x H x W feature map and
/// returns the K x C matrix of pooled patch features.
template <typename T>
Tensor<T> avg_pool_patches(const Tensor<T>& features, Size2 kernel, Size2 stride);

/// Per-window "any positive" over a binary mask, enumerated like
/// avg_pool_patches.
std::vector<std::uint8_t> max_pool2d(const Mask& mask, Size2 kernel, Size2 stride);

/// Bilinear upsampling by an integer factor with the align-corners-false
/// convention: output sample i reads source coordinate (i + 0.5) / f - 0.5,
/// clamped to the valid range. Accepts H x W or C x H x W tensors.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& map, std::size_t factor);

Grid<double> bilinear_upsample(const Grid<double>& map, std::size_t factor);

}  // namespace emil
