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
#include <set>

#include "emil/synth.hpp"

namespace emil {
namespace {

const std::vector<Sample>& corpus() {
  static const auto samples = generate(SynthConfig{}, 300, 0);
  return samples;
}

TEST(Synth, DeterministicPerSeedAndIndependentPerIndex) {
  SynthConfig cfg;
  auto a = generate(cfg, 20, 5);
  auto b = generate(cfg, 20, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(generate_sample(cfg, 5, 13), a[13]);
  auto c = generate(cfg, 20, 6);
  EXPECT_NE(a[0].image, c[0].image);
}

TEST(Synth, ImagesAreNormalisedAndSized) {
  for (const auto& s : corpus()) {
    ASSERT_EQ(s.image.rows(), 64u);
    ASSERT_EQ(s.image.cols(), 96u);
    ASSERT_EQ(s.mask.extent(), s.image.extent());
    for (float v : s.image.data()) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Synth, MultipleInstanceConsistency) {
  std::size_t positives = 0;
  for (const auto& s : corpus()) {
    const bool any_group = std::any_of(s.groups.begin(), s.groups.end(),
                                       [](const Group& g) { return g.label == 1; });
    EXPECT_EQ(s.label == 1, any_positive(s.mask));
    EXPECT_EQ(s.label == 1, any_group);
    positives += s.label;
    // Every lesion pixel lies in some group, and a group is positive exactly
    // when it holds lesion pixels.
    for (std::size_t y = 0; y < s.mask.rows(); ++y)
      for (std::size_t x = 0; x < s.mask.cols(); ++x) {
        if (!s.mask(y, x)) continue;
        bool inside = false;
        for (const auto& g : s.groups) {
          if (g.rect.contains(y, x)) {
            inside = true;
            EXPECT_EQ(g.label, 1);
          }
        }
        EXPECT_TRUE(inside) << y << "," << x;
      }
  }
  EXPECT_NEAR(static_cast<double>(positives) / 300.0, 0.7, 0.08);
}

TEST(Synth, NoPositivesWhenFractionIsZero) {
  SynthConfig cfg;
  cfg.positive_fraction = 0.0;
  for (const auto& s : generate(cfg, 50, 4)) {
    EXPECT_EQ(s.label, 0);
    EXPECT_EQ(count_positive(s.mask), 0u);
  }
}

TEST(Synth, LesionsAreASmallFractionOfPositiveImages) {
  const auto samples = generate(SynthConfig{}, 1000, 9);
  double lesion = 0.0, pixels = 0.0;
  for (const auto& s : samples) {
    if (s.label != 1) continue;
    for (auto v : s.mask.data()) lesion += v;
    pixels += static_cast<double>(s.mask.data().size());
  }
  EXPECT_LT(lesion / pixels, 0.02);
}

TEST(Synth, GroupLayoutIsDisjointAndInside) {
  SynthConfig cfg;
  auto rects = group_layout(cfg);
  ASSERT_EQ(rects.size(), cfg.groups);
  for (std::size_t i = 0; i < rects.size(); ++i) {
    EXPECT_LE(rects[i].x1, cfg.width);
    EXPECT_LE(rects[i].y1, cfg.height);
    EXPECT_GT(rects[i].width(), 0u);
    for (std::size_t j = i + 1; j < rects.size(); ++j) {
      const bool overlap = rects[i].x0 < rects[j].x1 && rects[j].x0 < rects[i].x1 &&
                           rects[i].y0 < rects[j].y1 && rects[j].y0 < rects[i].y1;
      EXPECT_FALSE(overlap);
    }
  }
}

TEST(Synth, ValidationRejectsBadConfigs) {
  SynthConfig c;
  c.positive_fraction = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lesions_min = 4;
  c.lesions_max = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.radius_max = 40;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.height = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(generate(SynthConfig{}, 0, 0), std::invalid_argument);
}

TEST(Split, StratifiedSizesAndDisjoint) {
  const auto labels = labels_of(corpus());
  auto s = stratified_split(labels, 0.15, 0.15, 3);
  EXPECT_EQ(s.val.size(), 45u);
  EXPECT_EQ(s.test.size(), 45u);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), labels.size());
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), labels.size());
  auto pos_rate = [&](const std::vector<std::size_t>& part) {
    double p = 0.0;
    for (auto i : part) p += labels[i];
    return p / static_cast<double>(part.size());
  };
  EXPECT_NEAR(pos_rate(s.val), pos_rate(s.train), 0.03);
  EXPECT_EQ(s.val, stratified_split(labels, 0.15, 0.15, 3).val);
  EXPECT_THROW(stratified_split(labels, 0.6, 0.5, 0), std::invalid_argument);
}

TEST(Split, FoldsPartitionIndices) {
  const auto labels = labels_of(corpus());
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto folds = stratified_folds(idx, labels, 5, 1);
  std::multiset<std::size_t> seen;
  for (const auto& f : folds) {
    seen.insert(f.begin(), f.end());
    EXPECT_NEAR(static_cast<double>(f.size()), 60.0, 1.0);
  }
  EXPECT_EQ(seen.size(), labels.size());
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), labels.size());
}

}  // namespace
}  // namespace emil
