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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "emil/encoder.hpp"
#include "emil/gradcheck.hpp"
#include "emil/ops.hpp"

namespace emil {
namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<double> v(count);
  for (auto& x : v) x = n(rng);
  return Tensor<double>(std::move(shape), std::move(v), grad);
}

EncoderConfig tiny(bool bn) {
  EncoderConfig c;
  c.stage_channels = {2, 3};
  c.stage_strides = {2, 1};
  c.batch_norm = bn;
  return c;
}

TEST(EncoderConfig, FeatureExtentAndValidation) {
  EncoderConfig c;
  EXPECT_EQ(c.total_stride(), 8u);
  EXPECT_EQ(c.feature_extent({64, 96}), (Size2{8, 12}));
  c.feature_upsample_factor = 4;
  EXPECT_EQ(c.feature_extent({64, 96}), (Size2{32, 48}));
  EXPECT_THROW(c.feature_extent({60, 96}), std::invalid_argument);
  c.feature_upsample_factor = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.stage_strides = {2, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.stage_channels = {16, 0, 64};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Encoder, ParameterNamesAndBuffers) {
  auto p = init_encoder<float>(tiny(true), 1);
  std::vector<std::string> names;
  for (const auto& [n, _] : p.named_parameters()) names.push_back(n);
  const std::vector<std::string> expect{
      "encoder.stage0.block0.conv1.weight",           "encoder.stage0.block0.norm1.gamma",
      "encoder.stage0.block0.norm1.beta",             "encoder.stage0.block0.conv2.weight",
      "encoder.stage0.block0.norm2.gamma",            "encoder.stage0.block0.norm2.beta",
      "encoder.stage0.block0.projection.weight",      "encoder.stage0.block0.projection_norm.gamma",
      "encoder.stage0.block0.projection_norm.beta",   "encoder.stage1.block0.conv1.weight",
      "encoder.stage1.block0.norm1.gamma",            "encoder.stage1.block0.norm1.beta",
      "encoder.stage1.block0.conv2.weight",           "encoder.stage1.block0.norm2.gamma",
      "encoder.stage1.block0.norm2.beta",             "encoder.stage1.block0.projection.weight",
      "encoder.stage1.block0.projection_norm.gamma",  "encoder.stage1.block0.projection_norm.beta",
  };
  EXPECT_EQ(names, expect);
  EXPECT_EQ(p.named_buffers().size(), 12u);
  for (const auto& [n, t] : p.named_buffers()) EXPECT_FALSE(t.requires_grad()) << n;

  auto q = init_encoder<float>(tiny(false), 1);
  EXPECT_TRUE(q.named_buffers().empty());
  EXPECT_EQ(q.named_parameters()[1].first, "encoder.stage0.block0.conv1.bias");
  EXPECT_EQ(q.named_parameters().size(), 12u);
}

TEST(Encoder, InitIsDeterministicAndHeScaled) {
  EncoderConfig c;
  auto a = init_encoder<float>(c, 5);
  auto b = init_encoder<float>(c, 5);
  auto d = init_encoder<float>(c, 6);
  ASSERT_EQ(a.named_parameters().size(), b.named_parameters().size());
  for (std::size_t i = 0; i < a.named_parameters().size(); ++i) {
    const auto va = a.named_parameters()[i].second.values();
    const auto vb = b.named_parameters()[i].second.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }
  EXPECT_NE(a.blocks[0].conv1.weight.at(0), d.blocks[0].conv1.weight.at(0));
  // Last stage conv2: 64 x 64 x 3 x 3, fan_in 576.
  const auto& w = a.blocks.back().conv2.weight;
  double ss = 0.0;
  for (float v : w.values()) ss += static_cast<double>(v) * v;
  EXPECT_NEAR(ss / static_cast<double>(w.numel()), 2.0 / 576.0, 0.05 * 2.0 / 576.0);
}

TEST(Encoder, OutputShapeAndNonNegative) {
  EncoderConfig c;
  auto p = init_encoder<double>(c, 2);
  auto u = encode(random_tensor({1, 64, 96}, 3), p);
  EXPECT_EQ(u.shape(), (Shape{64, 8, 12}));
  for (double v : u.values()) EXPECT_GE(v, 0.0);
  c.feature_upsample_factor = 4;
  auto up = encode(random_tensor({1, 1, 64, 96}, 3), init_encoder<double>(c, 2));
  EXPECT_EQ(up.shape(), (Shape{64, 32, 48}));
  EXPECT_THROW(encode(random_tensor({2, 64, 96}, 3), p), ShapeError);
  EXPECT_THROW(encode(random_tensor({2, 1, 64, 96}, 3), p), ShapeError);
}

TEST(Encoder, InferenceBatchMatchesSingleImages) {
  auto p = init_encoder<double>(tiny(true), 4);
  // Non-trivial running statistics.
  for (auto [_, t] : p.named_buffers()) {
    auto data = t.mutable_values();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = 0.5 + 0.1 * static_cast<double>(i);
  }
  auto batch = random_tensor({3, 1, 8, 8}, 7);
  NoGradGuard guard;
  auto outs = encode_batch(batch, p, false);
  ASSERT_EQ(outs.size(), 3u);
  for (std::size_t n = 0; n < 3; ++n) {
    auto single = encode(select(batch, n), p);
    ASSERT_EQ(single.shape(), outs[n].shape());
    for (std::size_t i = 0; i < single.numel(); ++i) EXPECT_NEAR(single.at(i), outs[n].at(i), 1e-12);
  }
}

TEST(Encoder, TrainingModeUpdatesRunningStatsOnly) {
  auto p = init_encoder<double>(tiny(true), 4);
  auto batch = random_tensor({4, 1, 8, 8}, 8);
  const auto before = p.blocks[0].norm1->running_mean.at(0);
  (void)encode_batch(batch, p, false);
  EXPECT_EQ(p.blocks[0].norm1->running_mean.at(0), before);
  (void)encode_batch(batch, p, true);
  EXPECT_NE(p.blocks[0].norm1->running_mean.at(0), before);
  // Batch statistics: every channel of the first normalised conv output has
  // zero mean over the batch, so training outputs differ from inference ones.
  auto train_out = encode_batch(batch, p, true);
  auto infer_out = encode_batch(batch, p, false);
  double diff = 0.0;
  for (std::size_t i = 0; i < train_out[0].numel(); ++i)
    diff += std::abs(train_out[0].at(i) - infer_out[0].at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  for (bool bn : {false, true}) {
    auto p = init_encoder<double>(tiny(bn), 11);
    auto image = random_tensor({2, 1, 4, 4}, 12, true);
    auto mix = random_tensor({3, 2, 2}, 13);
    std::vector<Tensor<double>> inputs{image};
    for (const auto& [_, t] : p.named_parameters()) inputs.push_back(t);
    auto program = [&](const std::vector<Tensor<double>>& in) {
      auto q = p;
      std::size_t k = 1;
      for (auto& b : q.blocks) {
        b.conv1.weight = in[k++];
        if (bn) k += 2;
        else b.conv1.bias = in[k++];
        b.conv2.weight = in[k++];
        if (bn) k += 2;
        else b.conv2.bias = in[k++];
        if (b.projection) {
          b.projection->weight = in[k++];
          if (bn) k += 2;
          else b.projection->bias = in[k++];
        }
      }
      auto outs = encode_batch(in[0], q, bn);
      return add(sum(mul(outs[0], mix)), sum(mul(outs[1], outs[1])));
    };
    auto r = grad_check(program, inputs);
    EXPECT_LT(r.max_relative_error, 1e-4) << "bn=" << bn << " worst " << r.worst;
    EXPECT_GT(r.checked, 16u);
  }
}

TEST(Encoder, PrecisionCastPreservesValues) {
  auto p = init_encoder<float>(tiny(true), 3);
  auto d = precision_cast<double>(p);
  auto image = random_tensor({1, 1, 8, 8}, 9);
  auto out_d = encode(image, d);
  auto out_f = encode(precision_cast<float>(image), p);
  for (std::size_t i = 0; i < out_d.numel(); ++i)
    EXPECT_NEAR(out_d.at(i), static_cast<double>(out_f.at(i)), 1e-4);
  EXPECT_EQ(d.named_buffers().size(), p.named_buffers().size());
}

}  // namespace
}  // namespace emil
