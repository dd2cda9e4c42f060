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
#include <span>
#include <vector>

#include "emil/grid.hpp"

namespace emil {

/// Synthetic low-SNR "lesion" images: two rows of bright pseudo-tooth
/// rectangles over a dark background, smoothed noise, dark distractor blobs,
/// and in positive images a few small bright disks inside the rectangles.
struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 96;
  double positive_fraction = 0.7;
  std::size_t lesions_min = 1;
  std::size_t lesions_max = 3;
  double radius_min = 2.0;
  double radius_max = 4.0;
  double contrast = 0.25;
  double contrast_jitter = 0.05;
  std::size_t groups = 6;
  double band_amplitude = 0.15;
  double noise_std = 0.08;
  double pixel_noise_std = 0.03;
  std::size_t distractors_max = 3;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  std::uint32_t x0 = 0;
  std::uint32_t y0 = 0;
  std::uint32_t x1 = 0;
  std::uint32_t y1 = 0;

  bool contains(std::size_t row, std::size_t col) const {
    return col >= x0 && col < x1 && row >= y0 && row < y1;
  }
  std::uint32_t width() const { return x1 - x0; }
  std::uint32_t height() const { return y1 - y0; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Group {
  Rect rect;
  int label = 0;
  friend bool operator==(const Group&, const Group&) = default;
};

struct Sample {
  Grid<float> image;  // values in [-1, 1]
  int label = 0;
  Mask mask;
  std::vector<Group> groups;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Group rectangles for a configuration, in row-major layout order.
std::vector<Rect> group_layout(const SynthConfig& config);

/// Sample `index` of the stream identified by `seed`; independent of every
/// other index, so generation can be split across workers.
Sample generate_sample(const SynthConfig& config, std::uint64_t seed, std::size_t index);

std::vector<Sample> generate(const SynthConfig& config, std::size_t n, std::uint64_t seed);

// Dataset container (little-endian):
//   "EMD1" | u32 count | per sample: u32 label, EMT1 image (f32), EMT1 mask (u8),
//   u32 group count, (x0, y0, x1, y1, label) u32 quintuples.
void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path);
std::vector<Sample> read_dataset(const std::filesystem::path& path);
std::size_t dataset_file_size(std::span<const Sample> samples);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded stratified split. Each part's size is round(n * fraction) overall
/// and as close to proportional as possible within each class.
Split stratified_split(std::span<const int> labels, double val_fraction, double test_fraction,
                       std::uint64_t seed);

/// Stratified partition of `indices` into k folds.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> indices,
                                                       std::span<const int> labels,
                                                       std::size_t k, std::uint64_t seed);

std::vector<int> labels_of(std::span<const Sample> samples);

}  // namespace emil
