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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "emil/config.hpp"
#include "emil/encoder.hpp"
#include "emil/guidance.hpp"
#include "emil/head.hpp"
#include "emil/metrics.hpp"
#include "emil/synth.hpp"
#include "emil/tensor.hpp"

namespace emil {

/// Raised when training produces a NaN or infinite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

template <typename T>
struct Model {
  EncoderParams<T> encoder;
  HeadParams<T> head;
  HeadConfig head_config;

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  /// Normalisation running statistics.
  std::vector<std::pair<std::string, Tensor<T>>> named_buffers() const;
  std::vector<Tensor<T>> parameters() const;
  /// Inference-mode forward pass of one C x H x W image.
  HeadOutput<T> forward(const Tensor<T>& image) const;
  /// Forward pass of an N x C x H x W batch; one head output per image.
  std::vector<HeadOutput<T>> forward_batch(const Tensor<T>& images, bool training) const;
  /// Deep copy with fresh leaves.
  Model clone() const;
};

Model<float> init_model(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed);

Tensor<float> image_tensor(const Sample& sample);
/// N x 1 x H x W stack of the selected samples.
Tensor<float> batch_tensor(std::span<const Sample> samples, std::span<const std::size_t> indices);

/// Adam without weight decay. Skips parameters that received no gradient.
class Adam {
 public:
  Adam(std::vector<Tensor<float>> params, const OptimizerConfig& config);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor<float>> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// Patch-level targets for every training sample, after the negative-mask
/// rule and the (seeded, fixed) teacher corruption have been applied.
std::vector<std::optional<std::vector<std::uint8_t>>> guidance_targets(
    std::span<const Sample> samples, std::span<const std::size_t> indices,
    const GuidanceConfig& guidance, const EncoderConfig& encoder, const HeadConfig& head,
    std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;          // mean compound loss over batches
  double l_image = 0.0;       // mean image partial loss
  std::optional<double> l_patch;
  std::vector<double> alpha;  // mean per partial loss
  double first_batch_loss = 0.0;
  double train_balanced_accuracy = 0.0;  // from the forward passes of the epoch
  MetricsReport val;
  bool best = false;
};

struct TrainOutcome {
  Model<float> model;  // parameters of the best validation epoch
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_balanced_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainOutcome train(const RunConfig& config, std::span<const Sample> samples, const Split& split,
                   const EpochCallback& on_epoch = {});

/// Same as above, starting from the given parameters.
TrainOutcome train(const RunConfig& config, Model<float> model, std::span<const Sample> samples,
                   const Split& split, const EpochCallback& on_epoch = {});

/// Indices of the patches whose window centre falls inside the rectangle.
std::vector<std::size_t> group_patches(const Rect& rect, std::size_t rows, std::size_t cols,
                                       Size2 kernel, Size2 stride, Size2 feature_extent,
                                       Size2 input_extent);

struct SampleRecord {
  std::size_t index = 0;
  int label = 0;
  double y_hat = 0.0;
  double attention_mass = 0.0;
  std::optional<double> iou_at_0;
  std::optional<double> iou_at_conf;
  std::vector<double> group_probability;  // NaN-free; groups without patches are omitted
  std::vector<int> group_label;
};

struct Evaluation {
  MetricsReport image;
  std::optional<MetricsReport> group;
  std::vector<SampleRecord> records;
};

Evaluation evaluate(const Model<float>& model, std::span<const Sample> samples,
                    std::span<const std::size_t> indices, const EvalConfig& config = {});

/// Prediction for one sample without building a graph.
Prediction predict(const Model<float>& model, const Sample& sample);

/// Element-wise mean of per-fold reports; AUCs average over folds that have them.
MetricsReport average_reports(std::span<const MetricsReport> reports);

/// Splits for k-fold cross-validation: fold f is the test set, fold f+1 the
/// validation set, the rest is used for training.
std::vector<Split> fold_splits(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Split selected by the configuration (70/15/15 stratified by default).
Split run_split(const RunConfig& config, std::span<const Sample> samples);

/// Writes `path` (concatenated EMT1 f32 tensors) and `path` + ".json".
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace emil
