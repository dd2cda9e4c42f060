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

#include <cmath>
#include <numeric>
#include <random>

#include "emil/gradcheck.hpp"
#include "emil/head.hpp"
#include "emil/ops.hpp"

namespace emil {
namespace {

using Rng = std::mt19937_64;

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> uniform(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor<double> random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor<double>(std::move(shape), std::move(v), grad);
}

TEST(Aggregate, DirectSummationOracle) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 1 + rng() % 6;
    auto yt = uniform(rng, k, 0.0, 1.0);
    auto w = uniform(rng, k, 0.0, 1.0);
    const double k_min = uniform(rng, 1, 0.0, 4.0)[0];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      num += w[i] * yt[i];
      den += w[i];
    }
    const double expect = num / std::max(den, k_min);
    EXPECT_NEAR(aggregate(yt, w, k_min), expect, 1e-12);
    Tensor<double> tyt({k}, yt), tw({k}, w);
    EXPECT_NEAR(aggregate(tyt, tw, k_min).item(), expect, 1e-12);
  }
}

TEST(Aggregate, TwoPatchRemovalKeepsPrediction) {
  // Two confident patches with full weight and K_min = 1: removing either one
  // leaves the image prediction unchanged.
  const std::vector<double> yt{1.0, 1.0}, w{1.0, 1.0};
  EXPECT_EQ(aggregate(yt, w, 1.0), 1.0);
  EXPECT_EQ(removal_delta(yt, w, 0, 1.0), 0.0);
  EXPECT_EQ(removal_delta(yt, w, 1, 1.0), 0.0);
}

TEST(Aggregate, ZeroMassWithZeroFloorIsZero) {
  const std::vector<double> yt{0.7, 0.2}, w{0.0, 0.0};
  EXPECT_EQ(aggregate(yt, w, 0.0), 0.0);
  Tensor<double> tyt({2}, yt), tw({2}, w);
  EXPECT_EQ(aggregate(tyt, tw, 0.0).item(), 0.0);
}

TEST(Aggregate, RejectsMismatchAndNegativeFloor) {
  const std::vector<double> a{0.1, 0.2}, b{0.3};
  EXPECT_THROW(aggregate(a, b, 1.0), std::invalid_argument);
  EXPECT_THROW(aggregate(a, a, -1.0), std::invalid_argument);
}

TEST(Aggregate, BoundedByMaxPatchAndMonotoneInFloor) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 1 + rng() % 12;
    auto yt = uniform(rng, k, 0.0, 1.0);
    auto w = uniform(rng, k, 0.0, 1.0);
    const double mx = *std::max_element(yt.begin(), yt.end());
    double prev = 2.0;
    for (double k_min : {0.5, 1.0, 2.0, 4.0}) {
      const double y = aggregate(yt, w, k_min);
      EXPECT_GE(y, 0.0);
      EXPECT_LE(y, mx + 1e-15);
      EXPECT_LE(y, prev + 1e-15);
      prev = y;
    }
  }
}

TEST(RemovalDelta, ClosedFormInFaithfulRegime) {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 1 + rng() % 6;
    const double k_min = uniform(rng, 1, 0.5, 4.0)[0];
    auto w = uniform(rng, k, 0.0, 1.0);
    const double mass = std::accumulate(w.begin(), w.end(), 0.0);
    if (mass > k_min) {
      for (auto& x : w) x *= k_min / mass * uniform(rng, 1, 0.1, 1.0)[0];
    }
    auto yt = uniform(rng, k, 0.0, 1.0);
    const std::size_t i = rng() % k;
    EXPECT_NEAR(removal_delta(yt, w, i, k_min), -w[i] * yt[i] / k_min, 1e-12);
    EXPECT_NEAR(removal_delta_closed_form(yt, w, i, k_min), -w[i] * yt[i] / k_min, 0.0);
  }
}

TEST(RemovalDelta, DiffersFromClosedFormAboveFloor) {
  const std::vector<double> yt{0.9, 0.1, 0.5}, w{1.0, 1.0, 1.0};
  const double exact = (0.1 + 0.5) / 2.0 - (0.9 + 0.1 + 0.5) / 3.0;
  EXPECT_NEAR(removal_delta(yt, w, 0, 1.0), exact, 1e-15);
  EXPECT_GT(std::abs(removal_delta(yt, w, 0, 1.0) - removal_delta_closed_form(yt, w, 0, 1.0)), 0.1);
}

TEST(GroupProbability, FullIndexSetEqualsAggregate) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + rng() % 6;
    auto yt = uniform(rng, k, 0.0, 1.0);
    auto w = uniform(rng, k, 0.0, 1.0);
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    EXPECT_NEAR(group_probability(yt, w, idx, 1.0), aggregate(yt, w, 1.0), 1e-12);
    // Subset oracle.
    const std::size_t m = 1 + rng() % k;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      num += w[idx[j]] * yt[idx[j]];
      den += w[idx[j]];
    }
    std::vector<std::size_t> sub(idx.begin(), idx.begin() + static_cast<long>(m));
    EXPECT_NEAR(group_probability(yt, w, sub, 1.0), num / std::max(den, 1.0), 1e-12);
  }
}

TEST(GroupProbability, RejectsBadIndices) {
  const std::vector<double> yt{0.5, 0.5}, w{0.5, 0.5};
  const std::vector<std::size_t> dup{0, 0}, out{2}, none;
  EXPECT_THROW(group_probability(yt, w, dup, 1.0), std::invalid_argument);
  EXPECT_THROW(group_probability(yt, w, out, 1.0), std::out_of_range);
  EXPECT_THROW(group_probability(yt, w, none, 1.0), std::invalid_argument);
}

TEST(GroupProbability, NegativeGroupWithNegligibleWeightIsNearZero) {
  const std::vector<double> yt{0.9, 0.01, 0.02}, w{0.95, 1e-6, 2e-6};
  const std::vector<std::size_t> group{1, 2};
  EXPECT_LT(group_probability(yt, w, group, 1.0), 1e-6);
}

TEST(Attend, WeightsMatchGatedFormulaAndAreIndependentPerPatch) {
  Rng rng(5);
  const std::size_t k = 5, c = 3, d = 4;
  auto p = random_tensor({k, c}, rng);
  auto a = random_tensor({c, d}, rng);
  auto b = random_tensor({c, d}, rng);
  auto cv = random_tensor({d}, rng);
  auto w = attend(p, a, b, cv);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double pa = 0.0, pb = 0.0;
      for (std::size_t q = 0; q < c; ++q) {
        pa += p.at(i * c + q) * a.at(q * d + j);
        pb += p.at(i * c + q) * b.at(q * d + j);
      }
      s += std::tanh(pa) * sigmoid_ref(pb) * cv.at(j);
    }
    EXPECT_NEAR(w.at(i), sigmoid_ref(s), 1e-12);
  }
  // Perturbing another row leaves weight 0 untouched.
  auto p2 = p.clone();
  p2.mutable_values()[3 * c] += 5.0;
  EXPECT_EQ(attend(p2, a, b, cv).at(0), w.at(0));
  auto soft = attend_softmax(p, a, b, cv);
  double total = 0.0;
  for (auto v : soft.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(HeadForward, ZeroHeadGivesHalfEverywhere) {
  HeadConfig cfg;
  cfg.hidden = 3;
  cfg.k_min = 4.0;
  Tensor<double> u({2, 2, 3}, std::vector<double>(12, 0.3));
  auto out = head_forward(u, zero_head<double>(2, 3), cfg);
  ASSERT_EQ(out.y_tilde.numel(), 6u);
  for (auto v : out.y_tilde.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (auto v : out.w.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  // sum w = 3 < K_min = 4: y_hat = 6 * 0.25 / 4.
  EXPECT_DOUBLE_EQ(out.y_hat.item(), 1.5 / 4.0);
}

TEST(HeadForward, PatchGridFollowsKernelAndStride) {
  Rng rng(6);
  HeadConfig cfg;
  cfg.kernel = {2, 3};
  cfg.stride = {2, 1};
  cfg.hidden = 4;
  auto u = random_tensor({3, 6, 5}, rng);
  auto out = head_forward(u, init_head<double>(3, 4, 1), cfg);
  EXPECT_EQ(out.rows, 3u);
  EXPECT_EQ(out.cols, 3u);
  EXPECT_EQ(out.y_tilde.numel(), 9u);
  auto pred = out.prediction();
  EXPECT_NEAR(pred.y_hat, aggregate(pred.y_tilde, pred.w, cfg.k_min), 1e-12);
}

TEST(HeadForward, GradientCheck) {
  Rng rng(7);
  HeadConfig cfg;
  cfg.kernel = {2, 2};
  cfg.hidden = 3;
  cfg.k_min = 0.8;
  std::vector<Tensor<double>> in{random_tensor({3, 3, 4}, rng, true),
                                 random_tensor({3}, rng, true), random_tensor({3, 3}, rng, true),
                                 random_tensor({3, 3}, rng, true), random_tensor({3}, rng, true)};
  auto r = grad_check(
      [&](const std::vector<Tensor<double>>& x) {
        return head_forward(x[0], HeadParams<double>{x[1], x[2], x[3], x[4]}, cfg).y_hat;
      },
      in);
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst;
}

TEST(HeadForward, MaxAndSoftmaxVariants) {
  Rng rng(8);
  auto u = random_tensor({2, 3, 3}, rng);
  auto head = init_head<double>(2, 4, 3);
  HeadConfig cfg;
  cfg.hidden = 4;
  cfg.aggregator = Aggregator::max;
  auto mx = head_forward(u, head, cfg);
  auto yt = mx.y_tilde.values();
  EXPECT_DOUBLE_EQ(mx.y_hat.item(), *std::max_element(yt.begin(), yt.end()));
  cfg.aggregator = Aggregator::softmax;
  auto sm = head_forward(u, head, cfg);
  double s = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    s += sm.w.at(i) * sm.y_tilde.at(i);
    wsum += sm.w.at(i);
  }
  EXPECT_NEAR(wsum, 1.0, 1e-14);
  EXPECT_NEAR(sm.y_hat.item(), s, 1e-14);
}

TEST(Aggregator, StringRoundTrip) {
  for (auto a : {Aggregator::gated_sigmoid, Aggregator::max, Aggregator::softmax}) {
    EXPECT_EQ(aggregator_from_string(to_string(a)), a);
  }
  EXPECT_THROW(aggregator_from_string("mean"), std::invalid_argument);
}

TEST(HeadConfig, Validation) {
  HeadConfig c;
  c.k_min = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.k_min = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.hidden = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Heatmaps, OneByOnePatchesPaintTheGrid) {
  Prediction p;
  p.rows = 2;
  p.cols = 3;
  p.y_tilde = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  p.w = {1, 0, 0, 0, 0, 0.5};
  auto [prob, attn] = build_heatmaps(p, {1, 1}, {1, 1}, {2, 3}, {8, 12});
  EXPECT_EQ(prob.grid.data(), p.y_tilde);
  EXPECT_EQ(attn.grid.data(), p.w);
  EXPECT_EQ(prob.render.rows(), 8u);
  EXPECT_EQ(prob.render.cols(), 12u);
  // Interior of a 4x4 block far from neighbours keeps the block value.
  EXPECT_NEAR(prob.render(1, 1), 0.1, 1e-12);
}

TEST(Heatmaps, OverlapAveragesProbabilitiesAndClipsAttention) {
  Prediction p;
  p.rows = 1;
  p.cols = 2;
  p.y_tilde = {0.2, 0.6};
  p.w = {0.7, 0.8};
  auto [prob, attn] = build_heatmaps(p, {1, 2}, {1, 1}, {1, 3}, {1, 3});
  EXPECT_EQ(prob.grid.data(), (std::vector<double>{0.2, 0.4, 0.6}));
  EXPECT_EQ(attn.grid.data(), (std::vector<double>{0.7, 1.0, 0.8}));
}

TEST(Heatmaps, UncoveredCellsStayZero) {
  Prediction p;
  p.rows = 1;
  p.cols = 1;
  p.y_tilde = {0.9};
  p.w = {0.9};
  auto [prob, attn] = build_heatmaps(p, {2, 2}, {2, 2}, {3, 3}, {3, 3});
  EXPECT_EQ(prob.grid(2, 2), 0.0);
  EXPECT_EQ(prob.grid(1, 1), 0.9);
  EXPECT_THROW(build_heatmaps(p, {1, 1}, {1, 1}, {3, 3}, {3, 3}), std::invalid_argument);
}

}  // namespace
}  // namespace emil
