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
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emil/encoder.hpp"
#include "emil/guidance.hpp"
#include "emil/head.hpp"
#include "emil/synth.hpp"

namespace emil {

/// Invalid configuration: unknown key, unparsable value, failed validation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// `key = value` lines with `#` comments and dotted keys. Insertion order is
/// kept so diagnostics list keys the way they were written.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct GuidanceConfig {
  bool use_masks = false;
  bool use_negative_masks = true;
  MaskCorruption corruption;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  /// Stop after this many epochs without a new best validation score (0 = never).
  std::size_t patience = 0;
  bool class_weighting = false;
  std::size_t folds = 1;
};

struct SplitConfig {
  double val = 0.15;
  double test = 0.15;
};

struct EvalConfig {
  double threshold = 0.5;
  double conf = 0.95;
  std::string split = "test";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path dataset;
  std::size_t dataset_size = 2800;
  std::filesystem::path checkpoint;
  SynthConfig synth;
  EncoderConfig encoder;
  HeadConfig head;
  GuidanceConfig guidance;
  OptimizerConfig optim;
  TrainConfig train;
  SplitConfig split;
  EvalConfig eval;

  /// Checks value ranges and, when requested, that the dataset exists.
  void validate(bool require_dataset) const;
};

/// Every key accepted by apply_config(), sorted.
std::vector<std::string> known_config_keys();

/// Applies all entries; unknown keys are collected and reported together.
void apply_config(RunConfig& config, const KeyValueConfig& entries);
RunConfig run_config_from(const KeyValueConfig& entries);

/// Canonical `key = value` rendering of a configuration.
std::string render_config(const RunConfig& config);

}  // namespace emil
