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

#include <benchmark/benchmark.h>

#include <random>

#include "emil/head.hpp"
#include "emil/metrics.hpp"
#include "emil/ops.hpp"
#include "emil/synth.hpp"
#include "emil/train.hpp"

namespace {

using namespace emil;

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<float> v(count);
  for (auto& x : v) x = n(rng);
  return Tensor<float>(std::move(shape), std::move(v), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = random_tensor({8, c, 32, 48}, 1);
  auto w = random_tensor({c, c, 3, 3}, 2);
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, Tensor<float>(), {1, 1}, {1, 1}));
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  auto x = random_tensor({8, 16, 32, 48}, 1, true);
  auto w = random_tensor({16, 16, 3, 3}, 2, true);
  for (auto _ : state) {
    auto y = sum(conv2d(x, w, Tensor<float>(), {1, 1}, {1, 1}));
    y.backward();
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_PredictImage(benchmark::State& state) {
  auto model = init_model(EncoderConfig{}, HeadConfig{}, 0);
  const auto sample = generate_sample(SynthConfig{}, 0, 0);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, sample).y_hat);
}
BENCHMARK(BM_PredictImage)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  auto model = init_model(EncoderConfig{}, HeadConfig{}, 0);
  const auto samples = generate(SynthConfig{}, batch, 0);
  std::vector<std::size_t> idx(batch);
  for (std::size_t i = 0; i < batch; ++i) idx[i] = i;
  const auto images = batch_tensor(samples, idx);
  Adam opt(model.parameters(), OptimizerConfig{});
  for (auto _ : state) {
    opt.zero_grad();
    auto outs = model.forward_batch(images, true);
    Tensor<float> total;
    for (std::size_t n = 0; n < batch; ++n) {
      auto l = image_loss(outs[n].y_hat, samples[n].label);
      total = total.defined() ? add(total, l) : l;
    }
    total.backward();
    opt.step();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_HeadForwardBackward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  auto features = random_tensor({64, hw, hw * 3 / 2}, 3, true);
  auto head = init_head<float>(64, 64, 4);
  for (auto& [_, p] : head.named_parameters()) p.set_requires_grad(true);
  HeadConfig cfg;
  for (auto _ : state) {
    auto out = head_forward(features, head, cfg);
    out.y_hat.backward();
  }
}
BENCHMARK(BM_HeadForwardBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    labels[i] = static_cast<int>(rng() % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
}
BENCHMARK(BM_RocAuc)->Arg(400)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
