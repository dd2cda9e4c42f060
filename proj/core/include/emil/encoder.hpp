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
#include <string>
#include <utility>
#include <vector>

#include "emil/grid.hpp"
#include "emil/tensor.hpp"

namespace emil {

/// Residual convolutional backbone layout. Each stage is
/// conv3x3(stride) -> relu -> conv3x3 (+ skip) -> relu; further blocks in a
/// stage repeat with stride 1 and an identity skip.
struct EncoderConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::vector<std::size_t> stage_strides{2, 2, 2};
  std::size_t input_channels = 1;
  /// 1 or 4; bilinear upsampling of the final feature map.
  std::size_t feature_upsample_factor = 1;
  /// Batch normalisation after every convolution (convolutions then carry no bias).
  bool batch_norm = true;

  void validate() const;
  std::size_t output_channels() const { return stage_channels.back(); }
  std::size_t total_stride() const;
  /// Feature-map extent for an input of the given extent (validates divisibility).
  Size2 feature_extent(Size2 input) const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // C_out x C_in x k x k
  Tensor<T> bias;    // C_out, undefined when followed by batch norm
};

template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;  // buffers, not trained by gradient
  Tensor<T> running_var;
};

template <typename T>
struct ResidualBlock {
  std::size_t stride = 1;
  ConvParams<T> conv1;
  ConvParams<T> conv2;
  std::optional<ConvParams<T>> projection;  // 1x1, present when shape changes
  std::optional<NormParams<T>> norm1;
  std::optional<NormParams<T>> norm2;
  std::optional<NormParams<T>> projection_norm;
};

template <typename T>
struct EncoderParams {
  EncoderConfig config;
  std::vector<ResidualBlock<T>> blocks;

  /// Stable names ("stage0.block0.conv1.weight", ...) in a fixed order.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  /// Batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor<T>>> named_buffers() const;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Deterministic per seed.
template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Encodes a batch (N x C x H x W) and returns one C' x H' x W' feature map
/// per image. `training` selects batch statistics for normalisation and
/// updates the running estimates.
template <typename T>
std::vector<Tensor<T>> encode_batch(const Tensor<T>& images, const EncoderParams<T>& params,
                                    bool training);

/// U = f_enc(X) in inference mode. Accepts C x H x W or 1 x C x H x W and
/// returns C_U x H_U x W_U.
template <typename T>
Tensor<T> encode(const Tensor<T>& image, const EncoderParams<T>& params);

template <typename To, typename From>
EncoderParams<To> precision_cast(const EncoderParams<From>& p) {
  auto conv = [](const ConvParams<From>& c) {
    return ConvParams<To>{precision_cast<To>(c.weight),
                          c.bias.defined() ? precision_cast<To>(c.bias) : Tensor<To>()};
  };
  auto norm = [](const std::optional<NormParams<From>>& n) -> std::optional<NormParams<To>> {
    if (!n) return std::nullopt;
    return NormParams<To>{precision_cast<To>(n->gamma), precision_cast<To>(n->beta),
                          precision_cast<To>(n->running_mean),
                          precision_cast<To>(n->running_var)};
  };
  EncoderParams<To> out;
  out.config = p.config;
  for (const auto& b : p.blocks) {
    ResidualBlock<To> nb;
    nb.stride = b.stride;
    nb.conv1 = conv(b.conv1);
    nb.conv2 = conv(b.conv2);
    if (b.projection) nb.projection = conv(*b.projection);
    nb.norm1 = norm(b.norm1);
    nb.norm2 = norm(b.norm2);
    nb.projection_norm = norm(b.projection_norm);
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

}  // namespace emil
