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

#include <random>

#include "emil/metrics.hpp"

namespace emil {
namespace {

using Rng = std::mt19937_64;

double pair_counting_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return hits / pairs;
}

TEST(Classification, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  auto r = classification_metrics(s, y);
  EXPECT_EQ(r.balanced_accuracy, 1.0);
  EXPECT_EQ(r.f_score, 1.0);
  EXPECT_EQ(r.sensitivity, 1.0);
  EXPECT_EQ(r.specificity, 1.0);
  EXPECT_EQ(*r.roc_auc, 1.0);
  EXPECT_EQ(*r.pr_auc, 1.0);
  EXPECT_EQ(r.n_pos, 2u);
  EXPECT_EQ(r.n_neg, 2u);
}

TEST(Classification, TiesAtThresholdPredictPositive) {
  const std::vector<double> s{0.5, 0.5, 0.5, 0.5};
  const std::vector<int> y{1, 0, 1, 0};
  auto r = classification_metrics(s, y, 0.5);
  EXPECT_EQ(r.sensitivity, 1.0);
  EXPECT_EQ(r.specificity, 0.0);
  EXPECT_EQ(r.balanced_accuracy, 0.5);
  EXPECT_EQ(*r.roc_auc, 0.5);
}

TEST(Classification, FourPointHandCase) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(*roc_auc(s, y), 0.75);
  // Thresholds 0.9, 0.8, 0.3, 0.1: recall steps of 1/2 at precision 1 and 2/3.
  EXPECT_DOUBLE_EQ(*pr_auc(s, y), 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
  auto r = classification_metrics(s, y);
  EXPECT_DOUBLE_EQ(r.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(r.specificity, 0.5);
  EXPECT_DOUBLE_EQ(r.f_score, 0.5);
}

TEST(Classification, SingleClassHasNoAuc) {
  const std::vector<double> s{0.2, 0.7};
  const std::vector<int> y{1, 1};
  auto r = classification_metrics(s, y);
  EXPECT_FALSE(r.roc_auc);
  EXPECT_FALSE(r.pr_auc);
  EXPECT_EQ(r.specificity, 0.0);
  EXPECT_EQ(r.sensitivity, 0.5);
}

TEST(Classification, RejectsBadInput) {
  const std::vector<double> s{0.2, 1.5};
  const std::vector<int> y{1, 0}, bad{1, 2}, short_y{1};
  EXPECT_THROW(classification_metrics(s, y), std::invalid_argument);
  const std::vector<double> ok{0.2, 0.5};
  EXPECT_THROW(classification_metrics(ok, bad), std::invalid_argument);
  EXPECT_THROW(classification_metrics(ok, short_y), std::invalid_argument);
}

TEST(Classification, RandomReportsMatchOraclesAndInvariants) {
  Rng rng(12);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 50;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores to force ties.
      s[i] = static_cast<double>(rng() % 11) / 10.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    auto r = classification_metrics(s, y);
    EXPECT_NEAR(*r.roc_auc, pair_counting_auc(s, y), 1e-12);
    EXPECT_NEAR(r.balanced_accuracy, 0.5 * (r.sensitivity + r.specificity), 1e-9);
    for (double v : {r.balanced_accuracy, r.f_score, r.sensitivity, r.specificity, *r.roc_auc,
                     *r.pr_auc}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(TopK, TiesResolveRowMajor) {
  Grid<double> g(2, 3, std::vector<double>{0.5, 0.9, 0.5, 0.5, 0.9, 0.1});
  EXPECT_EQ(top_k_pixels(g, 3), (std::vector<std::size_t>{1, 4, 0}));
  EXPECT_THROW(top_k_pixels(g, 7), std::invalid_argument);
}

TEST(Iou, RenderEqualToMaskScoresOne) {
  Mask m(3, 3, std::vector<std::uint8_t>{0, 1, 0, 1, 1, 0, 0, 0, 0});
  Grid<double> r(3, 3);
  for (std::size_t i = 0; i < 9; ++i) r[i] = m[i];
  EXPECT_EQ(*iou_localization(r, m, IouMode::at0, 0.0), 1.0);
}

TEST(Iou, ConstantRenderPicksRowMajorPrefix) {
  Mask m(2, 3, std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0});
  Grid<double> r(2, 3, 0.4);
  // Binarised = {0, 1}; intersection 1, union 3.
  EXPECT_DOUBLE_EQ(*iou_localization(r, m, IouMode::at0, 1.0), 1.0 / 3.0);
}

TEST(Iou, DisjointTopKScoresZeroAndAreaMatches) {
  Rng rng(3);
  Mask m(4, 4, 0);
  m(3, 3) = 1;
  m(3, 2) = 1;
  Grid<double> r(4, 4, 0.0);
  r(0, 0) = 1.0;
  r(0, 1) = 0.9;
  EXPECT_EQ(*iou_localization(r, m, IouMode::at0, 0.5), 0.0);
  for (int t = 0; t < 50; ++t) {
    Grid<double> rr(4, 4);
    for (auto& v : rr.data()) v = static_cast<double>(rng() % 4);
    EXPECT_EQ(top_k_pixels(rr, count_positive(m)).size(), count_positive(m));
  }
}

TEST(Iou, ConfidenceGateAndErrors) {
  Mask m(1, 2, std::vector<std::uint8_t>{1, 0});
  Grid<double> r(1, 2, std::vector<double>{0.9, 0.1});
  EXPECT_FALSE(iou_localization(r, m, IouMode::at_conf, 0.94, 0.95));
  EXPECT_EQ(*iou_localization(r, m, IouMode::at_conf, 0.95, 0.95), 1.0);
  EXPECT_THROW(iou_localization(r, Mask(1, 2, 0), IouMode::at0, 1.0), std::invalid_argument);
  EXPECT_THROW(iou_localization(r, Mask(2, 1, 1), IouMode::at0, 1.0), std::invalid_argument);
}

}  // namespace
}  // namespace emil
