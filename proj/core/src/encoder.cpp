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

#include "emil/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "emil/ops.hpp"

namespace emil {

void EncoderConfig::validate() const {
  if (stage_channels.empty()) throw std::invalid_argument("encoder: no stages configured");
  if (stage_channels.size() != stage_strides.size()) {
    throw std::invalid_argument("encoder: stage_channels has " +
                                std::to_string(stage_channels.size()) +
                                " entries but stage_strides has " +
                                std::to_string(stage_strides.size()));
  }
  for (auto c : stage_channels) {
    if (c == 0) throw std::invalid_argument("encoder: stage channel count must be positive");
  }
  for (auto s : stage_strides) {
    if (s == 0) throw std::invalid_argument("encoder: stage stride must be positive");
  }
  if (blocks_per_stage == 0) throw std::invalid_argument("encoder: blocks_per_stage must be >= 1");
  if (input_channels == 0) throw std::invalid_argument("encoder: input_channels must be >= 1");
  if (feature_upsample_factor != 1 && feature_upsample_factor != 4) {
    throw std::invalid_argument("encoder: feature_upsample_factor must be 1 or 4");
  }
}

std::size_t EncoderConfig::total_stride() const {
  std::size_t s = 1;
  for (auto v : stage_strides) s *= v;
  return s;
}

Size2 EncoderConfig::feature_extent(Size2 input) const {
  const auto s = total_stride();
  if (input.h % s != 0 || input.w % s != 0) {
    throw std::invalid_argument("encoder: input extent " + to_string(input) +
                                " is not divisible by the total stride " + std::to_string(s) +
                                "; pad the image to a multiple of " + std::to_string(s));
  }
  return {input.h / s * feature_upsample_factor, input.w / s * feature_upsample_factor};
}

namespace {

template <typename T>
ConvParams<T> he_conv(std::size_t cout, std::size_t cin, std::size_t k, bool with_bias,
                      std::mt19937_64& rng) {
  const std::size_t fan_in = cin * k * k;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> w(cout * fan_in);
  for (auto& v : w) v = static_cast<T>(dist(rng));
  return {Tensor<T>({cout, cin, k, k}, std::move(w), true),
          with_bias ? Tensor<T>::zeros({cout}, true) : Tensor<T>()};
}

template <typename T>
NormParams<T> unit_norm(std::size_t channels) {
  return {Tensor<T>::full({channels}, T(1), true), Tensor<T>::zeros({channels}, true),
          Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1))};
}

template <typename T>
Tensor<T> conv_norm(const Tensor<T>& x, const ConvParams<T>& conv,
                    const std::optional<NormParams<T>>& norm, Size2 stride, Size2 pad,
                    bool training) {
  auto y = conv2d(x, conv.weight, conv.bias, stride, pad);
  if (!norm) return y;
  return batch_norm2d(y, norm->gamma, norm->beta, norm->running_mean, norm->running_var,
                      training);
}

}  // namespace

template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  EncoderParams<T> p;
  p.config = config;
  const bool bias = !config.batch_norm;
  std::size_t cin = config.input_channels;
  for (std::size_t s = 0; s < config.stage_channels.size(); ++s) {
    const std::size_t cout = config.stage_channels[s];
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      ResidualBlock<T> blk;
      blk.stride = b == 0 ? config.stage_strides[s] : 1;
      blk.conv1 = he_conv<T>(cout, cin, 3, bias, rng);
      blk.conv2 = he_conv<T>(cout, cout, 3, bias, rng);
      const bool project = blk.stride != 1 || cin != cout;
      if (project) blk.projection = he_conv<T>(cout, cin, 1, bias, rng);
      if (config.batch_norm) {
        blk.norm1 = unit_norm<T>(cout);
        blk.norm2 = unit_norm<T>(cout);
        if (project) blk.projection_norm = unit_norm<T>(cout);
      }
      p.blocks.push_back(std::move(blk));
      cin = cout;
    }
  }
  return p;
}

namespace {

template <typename T, typename Visit>
void visit_blocks(const EncoderParams<T>& p, Visit&& visit) {
  const std::size_t per_stage = p.config.blocks_per_stage;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    visit("encoder.stage" + std::to_string(i / per_stage) + ".block" +
              std::to_string(i % per_stage) + ".",
          p.blocks[i]);
  }
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> EncoderParams<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto conv = [&](const std::string& name, const ConvParams<T>& c) {
    out.emplace_back(name + ".weight", c.weight);
    if (c.bias.defined()) out.emplace_back(name + ".bias", c.bias);
  };
  auto norm = [&](const std::string& name, const std::optional<NormParams<T>>& n) {
    if (!n) return;
    out.emplace_back(name + ".gamma", n->gamma);
    out.emplace_back(name + ".beta", n->beta);
  };
  visit_blocks(*this, [&](const std::string& prefix, const ResidualBlock<T>& b) {
    conv(prefix + "conv1", b.conv1);
    norm(prefix + "norm1", b.norm1);
    conv(prefix + "conv2", b.conv2);
    norm(prefix + "norm2", b.norm2);
    if (b.projection) conv(prefix + "projection", *b.projection);
    norm(prefix + "projection_norm", b.projection_norm);
  });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> EncoderParams<T>::named_buffers() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto norm = [&](const std::string& name, const std::optional<NormParams<T>>& n) {
    if (!n) return;
    out.emplace_back(name + ".running_mean", n->running_mean);
    out.emplace_back(name + ".running_var", n->running_var);
  };
  visit_blocks(*this, [&](const std::string& prefix, const ResidualBlock<T>& b) {
    norm(prefix + "norm1", b.norm1);
    norm(prefix + "norm2", b.norm2);
    norm(prefix + "projection_norm", b.projection_norm);
  });
  return out;
}

template <typename T>
std::vector<Tensor<T>> encode_batch(const Tensor<T>& images, const EncoderParams<T>& params,
                                    bool training) {
  const auto& cfg = params.config;
  if (images.rank() != 4) {
    throw ShapeError("encode: expected N x C x H x W, got " + shape_string(images.shape()));
  }
  if (images.dim(1) != cfg.input_channels) {
    throw ShapeError("encode: input channels (dim 1) = " + std::to_string(images.dim(1)) +
                     " but encoder expects " + std::to_string(cfg.input_channels));
  }
  (void)cfg.feature_extent({images.dim(2), images.dim(3)});

  Tensor<T> x = images;
  for (const auto& b : params.blocks) {
    const Size2 st{b.stride, b.stride};
    auto h = relu(conv_norm(x, b.conv1, b.norm1, st, {1, 1}, training));
    h = conv_norm(h, b.conv2, b.norm2, {1, 1}, {1, 1}, training);
    auto skip = b.projection
                    ? conv_norm(x, *b.projection, b.projection_norm, st, {0, 0}, training)
                    : x;
    x = relu(add(h, skip));
  }
  std::vector<Tensor<T>> out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    auto u = select(x, n);
    if (cfg.feature_upsample_factor > 1) u = bilinear_upsample(u, cfg.feature_upsample_factor);
    out.push_back(std::move(u));
  }
  return out;
}

template <typename T>
Tensor<T> encode(const Tensor<T>& image, const EncoderParams<T>& params) {
  if (image.rank() == 3) {
    return encode_batch(reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)}), params,
                        false)
        .front();
  }
  if (image.rank() == 4 && image.dim(0) == 1) return encode_batch(image, params, false).front();
  throw ShapeError("encode: expected C x H x W or 1 x C x H x W, got " +
                   shape_string(image.shape()));
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template EncoderParams<float> init_encoder<float>(const EncoderConfig&, std::uint64_t);
template EncoderParams<double> init_encoder<double>(const EncoderConfig&, std::uint64_t);
template Tensor<float> encode<float>(const Tensor<float>&, const EncoderParams<float>&);
template Tensor<double> encode<double>(const Tensor<double>&, const EncoderParams<double>&);
template std::vector<Tensor<float>> encode_batch<float>(const Tensor<float>&,
                                                        const EncoderParams<float>&, bool);
template std::vector<Tensor<double>> encode_batch<double>(const Tensor<double>&,
                                                          const EncoderParams<double>&, bool);

}  // namespace emil
