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
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "emil/ops.hpp"
#include "emil/train.hpp"

namespace emil {
namespace {

namespace fs = std::filesystem;

RunConfig small_config() {
  RunConfig c;
  c.encoder.stage_channels = {8, 16, 16};
  c.train.batch_size = 8;
  c.train.max_epochs = 3;
  return c;
}

const std::vector<Sample>& corpus() {
  static const auto samples = generate(SynthConfig{}, 48, 21);
  return samples;
}

Split small_split() {
  Split s;
  for (std::size_t i = 0; i < 32; ++i) s.train.push_back(i);
  for (std::size_t i = 32; i < 40; ++i) s.val.push_back(i);
  for (std::size_t i = 40; i < 48; ++i) s.test.push_back(i);
  return s;
}

std::vector<float> flat_parameters(const Model<float>& m) {
  std::vector<float> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.values().begin(), p.values().end());
  return out;
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  Tensor<float> x({3}, {1.0f, -2.0f, 0.5f}, true);
  OptimizerConfig cfg;
  cfg.lr = 0.0;
  Adam opt({x}, cfg);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    sum(mul(x, x)).backward();
    opt.step();
  }
  EXPECT_EQ(std::vector<float>(x.values().begin(), x.values().end()),
            (std::vector<float>{1.0f, -2.0f, 0.5f}));
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(Adam, FirstStepMovesEachEntryByLearningRate) {
  Tensor<float> x({3}, {1.0f, -2.0f, 0.5f}, true);
  Tensor<float> untouched({1}, {4.0f}, true);
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  Adam opt({x, untouched}, cfg);
  opt.zero_grad();
  sum(mul(x, x)).backward();
  opt.step();
  // Bias-corrected first step: lr * g / (|g| + eps).
  EXPECT_NEAR(x.at(0), 1.0f - 0.01f, 1e-6);
  EXPECT_NEAR(x.at(1), -2.0f + 0.01f, 1e-6);
  EXPECT_NEAR(x.at(2), 0.5f - 0.01f, 1e-6);
  EXPECT_EQ(untouched.at(0), 4.0f);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    sum(mul(x, x)).backward();
    opt.step();
  }
  for (float v : x.values()) EXPECT_NEAR(v, 0.0f, 1e-2);
}

TEST(Train, ZeroLearningRateEpochLeavesParameters) {
  auto cfg = small_config();
  cfg.train.max_epochs = 1;
  cfg.optim.lr = 0.0;
  auto initial = init_model(cfg.encoder, cfg.head, cfg.seed);
  const auto before = flat_parameters(initial);
  auto out = train(cfg, initial.clone(), corpus(), small_split());
  EXPECT_EQ(flat_parameters(out.model), before);
}

TEST(Model, CloneIsIndependentAndForwardMatchesPredict) {
  auto m = init_model(EncoderConfig{}, HeadConfig{}, 3);
  auto c = m.clone();
  EXPECT_EQ(flat_parameters(m), flat_parameters(c));
  c.parameters().front().mutable_values()[0] += 1.0f;
  EXPECT_NE(flat_parameters(m), flat_parameters(c));
  const auto& s = corpus()[0];
  auto pred = predict(m, s);
  NoGradGuard guard;
  auto out = m.forward(image_tensor(s));
  EXPECT_EQ(pred.y_hat, static_cast<double>(out.y_hat.item()));
  EXPECT_EQ(pred.patch_count(), 12u * 8u);
}

TEST(Model, BatchTensorStacksImages) {
  const std::vector<std::size_t> idx{3, 1};
  auto t = batch_tensor(corpus(), idx);
  EXPECT_EQ(t.shape(), (Shape{2, 1, 64, 96}));
  EXPECT_EQ(t.at(0), corpus()[3].image[0]);
  EXPECT_EQ(t.at(64 * 96 + 5), corpus()[1].image[5]);
}

TEST(GuidanceTargets, FollowMaskRules) {
  RunConfig c;
  const auto split = small_split();
  auto none = guidance_targets(corpus(), split.train, c.guidance, c.encoder, c.head, 0);
  EXPECT_TRUE(std::none_of(none.begin(), none.end(), [](const auto& t) { return t.has_value(); }));
  c.guidance.use_masks = true;
  auto t = guidance_targets(corpus(), split.train, c.guidance, c.encoder, c.head, 0);
  for (std::size_t n = 0; n < t.size(); ++n) {
    const auto& s = corpus()[split.train[n]];
    ASSERT_TRUE(t[n]);
    EXPECT_EQ(t[n]->size(), 96u);
    const bool any = std::any_of(t[n]->begin(), t[n]->end(), [](auto v) { return v != 0; });
    EXPECT_EQ(any, s.label == 1);
  }
  c.guidance.use_negative_masks = false;
  c.guidance.corruption.drop_p = 1.0;
  auto dropped = guidance_targets(corpus(), split.train, c.guidance, c.encoder, c.head, 0);
  EXPECT_TRUE(std::none_of(dropped.begin(), dropped.end(), [](const auto& x) { return x.has_value(); }));
}

TEST(Train, RepeatRunsAreBitIdentical) {
  const auto cfg = small_config();
  auto a = train(cfg, corpus(), small_split());
  auto b = train(cfg, corpus(), small_split());
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(a.log[e].loss, b.log[e].loss);
    EXPECT_EQ(a.log[e].first_batch_loss, b.log[e].first_batch_loss);
    EXPECT_EQ(a.log[e].val.balanced_accuracy, b.log[e].val.balanced_accuracy);
  }
  EXPECT_EQ(flat_parameters(a.model), flat_parameters(b.model));
}

TEST(Train, BestEpochIsTheFirstMaximumOfValidationAccuracy) {
  auto cfg = small_config();
  cfg.train.max_epochs = 5;
  std::size_t callbacks = 0;
  auto out = train(cfg, corpus(), small_split(), [&](const EpochRecord&) { ++callbacks; });
  EXPECT_EQ(callbacks, out.log.size());
  double best = -1.0;
  std::size_t arg = 0;
  for (const auto& r : out.log) {
    if (r.val.balanced_accuracy > best) {
      best = r.val.balanced_accuracy;
      arg = r.epoch;
    }
  }
  EXPECT_EQ(out.best_epoch, arg);
  EXPECT_EQ(out.best_val_balanced_accuracy, best);
  EXPECT_TRUE(out.log[arg].best);
  // The returned model reproduces the best epoch's validation score.
  EXPECT_EQ(evaluate(out.model, corpus(), small_split().val).image.balanced_accuracy, best);

  cfg.train.max_epochs = 30;
  cfg.train.patience = 1;
  auto early = train(cfg, corpus(), small_split());
  EXPECT_LT(early.log.size(), 30u);
  EXPECT_EQ(early.log.size(), early.best_epoch + 2);
}

TEST(Train, OverfitsSmallTrainingSet) {
  auto cfg = small_config();
  cfg.train.max_epochs = 40;
  cfg.optim.lr = 3e-3;
  auto split = small_split();
  // Validate on the training set so the kept model is the one that fits it best.
  split.val = split.train;
  auto out = train(cfg, corpus(), split);
  EXPECT_EQ(out.best_val_balanced_accuracy, 1.0);
  EXPECT_LT(out.log.back().l_image, out.log.front().l_image);
}

TEST(Train, GuidedRunsReportPatchLossAndAlpha) {
  auto cfg = small_config();
  cfg.train.max_epochs = 1;
  cfg.guidance.use_masks = true;
  auto out = train(cfg, corpus(), small_split());
  const auto& r = out.log[0];
  ASSERT_TRUE(r.l_patch);
  ASSERT_EQ(r.alpha.size(), 2u);
  EXPECT_GE(r.alpha[0], 1.0);
  EXPECT_GE(r.alpha[1], 1.0);
  EXPECT_TRUE(r.alpha[0] == 1.0 || r.alpha[1] == 1.0);
}

TEST(Train, NonFiniteLossRaises) {
  auto cfg = small_config();
  auto model = init_model(cfg.encoder, cfg.head, 0);
  for (auto& v : model.head.c.mutable_values()) v = std::numeric_limits<float>::quiet_NaN();
  try {
    train(cfg, model, corpus(), small_split());
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.batch(), 0u);
  }
  Split empty;
  EXPECT_THROW(train(cfg, corpus(), empty), std::invalid_argument);
}

TEST(Checkpoint, RoundTripsPredictions) {
  auto cfg = small_config();
  cfg.train.max_epochs = 1;
  auto out = train(cfg, corpus(), small_split());
  const auto dir = fs::temp_directory_path() / "emil_ckpt_test";
  fs::create_directories(dir);
  const auto path = dir / "model.emt";
  save_checkpoint(out.model, path);
  ASSERT_TRUE(fs::exists(path.string() + ".json"));
  auto back = load_checkpoint(path);
  EXPECT_EQ(flat_parameters(back), flat_parameters(out.model));
  ASSERT_EQ(back.named_buffers().size(), out.model.named_buffers().size());
  for (std::size_t i = 0; i < back.named_buffers().size(); ++i) {
    const auto a = back.named_buffers()[i].second.values();
    const auto b = out.model.named_buffers()[i].second.values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  for (std::size_t i = 40; i < 48; ++i) {
    EXPECT_EQ(predict(back, corpus()[i]).y_hat, predict(out.model, corpus()[i]).y_hat);
  }
  fs::resize_file(path, fs::file_size(path) - 4);
  EXPECT_ANY_THROW(load_checkpoint(path));
  EXPECT_THROW(load_checkpoint(dir / "missing.emt"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Evaluate, RecordsAndGroupScores) {
  auto model = init_model(EncoderConfig{}, HeadConfig{}, 1);
  const auto split = small_split();
  auto ev = evaluate(model, corpus(), split.test);
  ASSERT_EQ(ev.records.size(), split.test.size());
  ASSERT_TRUE(ev.group);
  std::size_t groups = 0;
  for (const auto& r : ev.records) {
    EXPECT_GE(r.y_hat, 0.0);
    EXPECT_LE(r.y_hat, 1.0);
    EXPECT_EQ(r.iou_at_0.has_value(), r.label == 1);
    EXPECT_EQ(r.group_probability.size(), r.group_label.size());
    groups += r.group_probability.size();
  }
  EXPECT_EQ(ev.group->n_pos + ev.group->n_neg, groups);
  EXPECT_THROW(evaluate(model, corpus(), std::span<const std::size_t>()), std::invalid_argument);
}

TEST(GroupPatches, CentreRule) {
  // 4 x 4 features over 32 x 32 pixels, 2 x 2 windows at stride 2: centres at
  // feature (1, 1), (1, 3), (3, 1), (3, 3) -> pixels (8, 8), (8, 24), ...
  const Rect left{0, 0, 16, 32};
  EXPECT_EQ(group_patches(left, 2, 2, {2, 2}, {2, 2}, {4, 4}, {32, 32}),
            (std::vector<std::size_t>{0, 2}));
  const Rect corner{24, 24, 32, 32};
  EXPECT_EQ(group_patches(corner, 2, 2, {2, 2}, {2, 2}, {4, 4}, {32, 32}),
            (std::vector<std::size_t>{3}));
  const Rect gap{9, 9, 20, 20};
  EXPECT_TRUE(group_patches(gap, 2, 2, {2, 2}, {2, 2}, {4, 4}, {32, 32}).empty());
}

TEST(Folds, TestAndValidationRotate) {
  const auto labels = labels_of(generate(SynthConfig{}, 50, 2));
  auto splits = fold_splits(labels, 5, 4);
  ASSERT_EQ(splits.size(), 5u);
  std::multiset<std::size_t> tested;
  for (std::size_t f = 0; f < 5; ++f) {
    tested.insert(splits[f].test.begin(), splits[f].test.end());
    EXPECT_EQ(splits[f].val, splits[(f + 1) % 5].test);
    EXPECT_EQ(splits[f].train.size() + splits[f].val.size() + splits[f].test.size(), 50u);
  }
  EXPECT_EQ(std::set<std::size_t>(tested.begin(), tested.end()).size(), 50u);
  EXPECT_EQ(tested.size(), 50u);
  EXPECT_THROW(fold_splits(labels, 2, 0), std::invalid_argument);
}

TEST(AverageReports, MeansAndOptionalAucs) {
  MetricsReport a, b;
  a.sensitivity = 1.0;
  a.specificity = 0.5;
  a.roc_auc = 0.8;
  a.n_pos = 3;
  b.sensitivity = 0.5;
  b.specificity = 0.5;
  b.n_pos = 2;
  const std::vector<MetricsReport> v{a, b};
  auto r = average_reports(v);
  EXPECT_DOUBLE_EQ(r.sensitivity, 0.75);
  EXPECT_DOUBLE_EQ(r.balanced_accuracy, 0.625);
  EXPECT_EQ(*r.roc_auc, 0.8);
  EXPECT_FALSE(r.pr_auc);
  EXPECT_EQ(r.n_pos, 5u);
}

}  // namespace
}  // namespace emil
