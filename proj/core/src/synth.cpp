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

#include "emil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "emil/io.hpp"

namespace emil {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// 3x3 box blur applied in place with edge clamping.
void box_blur(std::vector<double>& v, std::size_t h, std::size_t w) {
  std::vector<double> tmp(v.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dx = -1; dx <= 1; ++dx) {
        auto xx = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0,
                                       static_cast<std::ptrdiff_t>(w) - 1));
        s += v[y * w + xx];
      }
      tmp[y * w + x] = s / 3.0;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        auto yy = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0,
                                       static_cast<std::ptrdiff_t>(h) - 1));
        s += tmp[yy * w + x];
      }
      v[y * w + x] = s / 3.0;
    }
  }
}

template <typename Fn>
void for_disk(double cy, double cx, double r, std::size_t h, std::size_t w, Fn fn) {
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - r));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + r));
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - r));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + r));
  for (auto y = std::max<std::ptrdiff_t>(y0, 0); y <= y1 && y < static_cast<std::ptrdiff_t>(h);
       ++y) {
    for (auto x = std::max<std::ptrdiff_t>(x0, 0); x <= x1 && x < static_cast<std::ptrdiff_t>(w);
         ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx <= r * r) fn(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("synth: image extent must be positive");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw std::invalid_argument("synth: positive_fraction must lie in [0, 1]");
  }
  if (lesions_min == 0 || lesions_min > lesions_max) {
    throw std::invalid_argument("synth: need 1 <= lesions_min <= lesions_max");
  }
  if (!(radius_min > 0.0 && radius_min <= radius_max)) {
    throw std::invalid_argument("synth: need 0 < radius_min <= radius_max");
  }
  if (groups == 0) throw std::invalid_argument("synth: at least one group is required");
  if (contrast_jitter < 0.0 || noise_std < 0.0 || pixel_noise_std < 0.0) {
    throw std::invalid_argument("synth: noise and jitter must be non-negative");
  }
  const auto layout = group_layout(*this);
  for (const auto& r : layout) {
    const double span = 2.0 * radius_max + 1.0;
    if (span > static_cast<double>(std::min(r.width(), r.height()))) {
      throw std::invalid_argument("synth: lesion radius " + std::to_string(radius_max) +
                                  " does not fit inside a " + std::to_string(r.width()) + "x" +
                                  std::to_string(r.height()) + " group rectangle");
    }
  }
}

std::vector<Rect> group_layout(const SynthConfig& config) {
  const std::size_t rows = config.groups >= 2 ? 2 : 1;
  const std::size_t cols = (config.groups + rows - 1) / rows;
  const std::size_t cell_h = config.height / rows;
  const std::size_t cell_w = config.width / cols;
  const std::size_t margin_h = std::max<std::size_t>(1, cell_h / 10);
  const std::size_t margin_w = std::max<std::size_t>(1, cell_w / 10);
  if (cell_h <= 2 * margin_h || cell_w <= 2 * margin_w) {
    throw std::invalid_argument("synth: image too small for " + std::to_string(config.groups) +
                                " groups");
  }
  std::vector<Rect> out;
  for (std::size_t g = 0; g < config.groups; ++g) {
    const std::size_t r = g / cols, c = g % cols;
    out.push_back({static_cast<std::uint32_t>(c * cell_w + margin_w),
                   static_cast<std::uint32_t>(r * cell_h + margin_h),
                   static_cast<std::uint32_t>((c + 1) * cell_w - margin_w),
                   static_cast<std::uint32_t>((r + 1) * cell_h - margin_h)});
  }
  return out;
}

Sample generate_sample(const SynthConfig& config, std::uint64_t seed, std::size_t index) {
  const std::size_t h = config.height, w = config.width;
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Sample s;
  s.label = unit(rng) < config.positive_fraction ? 1 : 0;
  const auto layout = group_layout(config);

  std::vector<double> img(h * w, -0.55);
  // Pseudo-teeth: bright rectangles with a smooth light/dark vertical band profile.
  for (const auto& r : layout) {
    const double body = 0.25 + 0.2 * (unit(rng) - 0.5);
    const double phase = unit(rng) * 6.283185307179586;
    const double xc = 0.5 * (r.x0 + r.x1);
    const double half = 0.5 * r.width();
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        const double u = (static_cast<double>(x) + 0.5 - xc) / half;
        img[y * w + x] = body + config.band_amplitude * std::cos(3.0 * u + phase);
      }
    }
  }
  // Low-frequency structural noise.
  std::vector<double> noise(h * w);
  for (auto& v : noise) v = gauss(rng);
  box_blur(noise, h, w);
  box_blur(noise, h, w);
  double var = 0.0;
  for (double v : noise) var += v * v;
  const double norm = var > 0.0 ? config.noise_std / std::sqrt(var / static_cast<double>(noise.size()))
                                 : 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) img[i] += noise[i] * norm;

  // Dark distractor blobs anywhere.
  std::uniform_int_distribution<std::size_t> n_distract(0, config.distractors_max);
  const std::size_t distractors = n_distract(rng);
  for (std::size_t d = 0; d < distractors; ++d) {
    const double r = config.radius_min + unit(rng) * (config.radius_max - config.radius_min);
    const double cy = unit(rng) * static_cast<double>(h);
    const double cx = unit(rng) * static_cast<double>(w);
    const double depth = config.contrast + config.contrast_jitter * (2.0 * unit(rng) - 1.0);
    for_disk(cy, cx, r, h, w, [&](std::size_t y, std::size_t x) { img[y * w + x] -= depth; });
  }

  s.mask = Mask(h, w, 0);
  if (s.label == 1) {
    std::uniform_int_distribution<std::size_t> n_lesions(config.lesions_min, config.lesions_max);
    std::uniform_int_distribution<std::size_t> pick_group(0, layout.size() - 1);
    const std::size_t count = n_lesions(rng);
    for (std::size_t l = 0; l < count; ++l) {
      const auto& r = layout[pick_group(rng)];
      const double rad = config.radius_min + unit(rng) * (config.radius_max - config.radius_min);
      // Disk of radius rad centred at c covers [c - rad, c + rad]; keep it in the rect.
      const double lo_y = r.y0 + rad, hi_y = r.y1 - 1 - rad;
      const double lo_x = r.x0 + rad, hi_x = r.x1 - 1 - rad;
      const double cy = lo_y + unit(rng) * (hi_y - lo_y);
      const double cx = lo_x + unit(rng) * (hi_x - lo_x);
      const double delta = config.contrast + config.contrast_jitter * (2.0 * unit(rng) - 1.0);
      for_disk(cy, cx, rad, h, w, [&](std::size_t y, std::size_t x) {
        if (!s.mask(y, x)) img[y * w + x] += delta;
        s.mask(y, x) = 1;
      });
    }
    // A disk smaller than one pixel centre could miss every grid point.
    if (!any_positive(s.mask)) {
      const auto& r = layout[0];
      const std::size_t y = (r.y0 + r.y1) / 2, x = (r.x0 + r.x1) / 2;
      s.mask(y, x) = 1;
      img[y * w + x] += config.contrast;
    }
  }

  std::vector<float> px(h * w);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = img[i] + config.pixel_noise_std * gauss(rng);
    px[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  s.image = Grid<float>(h, w, std::move(px));

  for (const auto& r : layout) {
    Group g{r, 0};
    for (std::size_t y = r.y0; y < r.y1 && !g.label; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        if (s.mask(y, x)) {
          g.label = 1;
          break;
        }
      }
    }
    s.groups.push_back(g);
  }
  return s;
}

std::vector<Sample> generate(const SynthConfig& config, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate: n must be >= 1");
  config.validate();
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(config, seed, i));
  return out;
}

// ---------------------------------------------------------------------------
// EMD1 container
// ---------------------------------------------------------------------------

namespace {
constexpr char kDatasetMagic[4] = {'E', 'M', 'D', '1'};
}

std::size_t dataset_file_size(std::span<const Sample> samples) {
  std::size_t n = 8;
  for (const auto& s : samples) {
    n += 4;
    n += emt_record_size(DType::f32, {s.image.rows(), s.image.cols()});
    n += emt_record_size(DType::u8, {s.mask.rows(), s.mask.cols()});
    n += 4 + 20 * s.groups.size();
  }
  return n;
}

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kDatasetMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    write_u32(os, static_cast<std::uint32_t>(s.label));
    write_emt(os, Shape{s.image.rows(), s.image.cols()}, std::span<const float>(s.image.data()));
    write_emt(os, Shape{s.mask.rows(), s.mask.cols()},
              std::span<const std::uint8_t>(s.mask.data()));
    write_u32(os, static_cast<std::uint32_t>(s.groups.size()));
    for (const auto& g : s.groups) {
      write_u32(os, g.rect.x0);
      write_u32(os, g.rect.y0);
      write_u32(os, g.rect.x1);
      write_u32(os, g.rect.y1);
      write_u32(os, static_cast<std::uint32_t>(g.label));
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << file.rdbuf();
  std::istringstream is(buffer.str());

  std::uint64_t pos = 0;
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4) throw FormatError("truncated dataset header", static_cast<std::uint64_t>(is.gcount()));
  if (std::string_view(magic, 4) != std::string_view(kDatasetMagic, 4)) {
    throw FormatError("bad EMD1 magic", 0);
  }
  pos = 4;
  const auto count = read_u32(is, pos);
  pos += 4;
  std::vector<Sample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    const auto label = read_u32(is, pos);
    if (label > 1) throw FormatError("sample label must be 0 or 1", pos);
    s.label = static_cast<int>(label);
    pos += 4;

    auto img = read_emt(is, pos);
    if (img.dtype() != DType::f32 || img.shape.size() != 2) {
      throw FormatError("sample image must be a rank-2 f32 tensor", pos);
    }
    pos += emt_record_size(img.dtype(), img.shape);
    s.image = Grid<float>(img.shape[0], img.shape[1], std::get<std::vector<float>>(img.data));

    auto mask = read_emt(is, pos);
    if (mask.dtype() != DType::u8 || mask.shape != img.shape) {
      throw FormatError("sample mask must be a u8 tensor matching the image", pos);
    }
    pos += emt_record_size(mask.dtype(), mask.shape);
    s.mask = Mask(mask.shape[0], mask.shape[1], std::get<std::vector<std::uint8_t>>(mask.data));

    const auto groups = read_u32(is, pos);
    pos += 4;
    for (std::uint32_t g = 0; g < groups; ++g) {
      Group grp;
      grp.rect.x0 = read_u32(is, pos);
      grp.rect.y0 = read_u32(is, pos + 4);
      grp.rect.x1 = read_u32(is, pos + 8);
      grp.rect.y1 = read_u32(is, pos + 12);
      grp.label = static_cast<int>(read_u32(is, pos + 16));
      pos += 20;
      s.groups.push_back(grp);
    }
    out.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after last sample", pos);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

namespace {

// Largest-remainder allocation of `total` items across classes.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& class_sizes, double fraction,
                                  std::size_t total) {
  std::vector<std::size_t> out(class_sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    const double exact = static_cast<double>(class_sizes[c]) * fraction;
    out[c] = static_cast<std::size_t>(std::floor(exact));
    used += out[c];
    rem.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total && i < rem.size(); ++i) {
    if (out[rem[i].second] < class_sizes[rem[i].second]) {
      ++out[rem[i].second];
      ++used;
    }
  }
  return out;
}

}  // namespace

Split stratified_split(std::span<const int> labels, double val_fraction, double test_fraction,
                       std::uint64_t seed) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("stratified_split: fractions must be >= 0 and sum below 1");
  }
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& v : by_class) std::shuffle(v.begin(), v.end(), rng);

  const std::vector<std::size_t> sizes{by_class[0].size(), by_class[1].size()};
  const auto n = static_cast<double>(labels.size());
  const auto n_val = allocate(sizes, val_fraction, static_cast<std::size_t>(std::llround(n * val_fraction)));
  const auto n_test =
      allocate(sizes, test_fraction, static_cast<std::size_t>(std::llround(n * test_fraction)));

  Split split;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& v = by_class[c];
    const std::size_t tv = std::min(n_val[c], v.size());
    const std::size_t tt = std::min(n_test[c], v.size() - tv);
    split.val.insert(split.val.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(tv));
    split.test.insert(split.test.end(), v.begin() + static_cast<std::ptrdiff_t>(tv),
                      v.begin() + static_cast<std::ptrdiff_t>(tv + tt));
    split.train.insert(split.train.end(), v.begin() + static_cast<std::ptrdiff_t>(tv + tt), v.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> indices,
                                                       std::span<const int> labels,
                                                       std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_folds: need at least 2 folds");
  std::vector<std::vector<std::size_t>> by_class(2);
  for (auto i : indices) {
    if (i >= labels.size()) throw std::out_of_range("stratified_folds: index out of range");
    by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& v : by_class) {
    std::shuffle(v.begin(), v.end(), rng);
    for (auto i : v) folds[next++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace emil
