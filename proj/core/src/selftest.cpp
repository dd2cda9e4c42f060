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

#include "emil/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "emil/guidance.hpp"
#include "emil/head.hpp"
#include "emil/io.hpp"
#include "emil/metrics.hpp"
#include "emil/ops.hpp"
#include "emil/synth.hpp"

namespace emil {

namespace {

using Rng = std::mt19937_64;

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor<double>(std::move(shape), std::move(v), true);
}

// Projects a tensor onto a fixed random direction so every output element
// contributes to the checked scalar.
Tensor<double> project(const Tensor<double>& t, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(t.numel());
  for (auto& x : w) x = u(rng);
  return sum(mul(t, Tensor<double>(t.shape(), std::move(w))));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

std::vector<GradCheckCase> gradient_suite(std::uint64_t seed, std::size_t instances, double eps) {
  std::vector<GradCheckCase> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::uint64_t ps = rng();
    {
      const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 3);
      const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
      const Size2 stride{pick(rng, 1, 2), pick(rng, 1, 2)};
      const Size2 pad{pick(rng, 0, 1), pick(rng, 0, 1)};
      std::vector<Tensor<double>> in{random_tensor({1, cin, h, w}, rng),
                                     random_tensor({cout, cin, k, k}, rng),
                                     random_tensor({cout}, rng)};
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            return project(conv2d(x[0], x[1], x[2], stride, pad), ps);
          },
          in, eps);
      out.push_back({"conv2d", i, r});
    }
    {
      const std::size_t c = pick(rng, 1, 3), h = pick(rng, 2, 6), w = pick(rng, 2, 6);
      const Size2 kernel{pick(rng, 1, h), pick(rng, 1, w)};
      const Size2 stride{pick(rng, 1, 2), pick(rng, 1, 2)};
      std::vector<Tensor<double>> in{random_tensor({c, h, w}, rng)};
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            return project(avg_pool_patches(x[0], kernel, stride), ps);
          },
          in, eps);
      out.push_back({"avg_pool_patches", i, r});
    }
    {
      const std::size_t c = pick(rng, 1, 2), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
      const std::size_t f = rng() % 2 == 0 ? 2 : 4;
      std::vector<Tensor<double>> in{random_tensor({c, h, w}, rng)};
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            return project(bilinear_upsample(x[0], f), ps);
          },
          in, eps);
      out.push_back({"bilinear_upsample", i, r});
    }
    {
      const std::size_t n = pick(rng, 2, 3), c = pick(rng, 1, 3);
      const std::size_t h = pick(rng, 1, 3), w = pick(rng, 2, 3);
      std::vector<Tensor<double>> in{random_tensor({n, c, h, w}, rng), random_tensor({c}, rng),
                                     random_tensor({c}, rng)};
      Tensor<double> mean({c}, std::vector<double>(c, 0.0));
      Tensor<double> var({c}, std::vector<double>(c, 1.0));
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            return project(batch_norm2d(x[0], x[1], x[2], mean, var, true), ps);
          },
          in, eps);
      out.push_back({"batch_norm2d", i, r});
    }
    {
      const std::size_t n = pick(rng, 2, 4), c = pick(rng, 1, 3), h = pick(rng, 1, 3);
      const std::size_t at = pick(rng, 0, n - 1);
      std::vector<Tensor<double>> in{random_tensor({n, c, h}, rng)};
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) { return project(select(x[0], at), ps); }, in,
          eps);
      out.push_back({"select", i, r});
    }
    {
      const std::size_t c = pick(rng, 2, 4), d = pick(rng, 2, 5);
      const std::size_t h = pick(rng, 2, 4), w = pick(rng, 2, 4);
      HeadConfig cfg;
      cfg.kernel = {pick(rng, 1, h), pick(rng, 1, w)};
      cfg.stride = {1, 1};
      cfg.hidden = d;
      cfg.k_min = std::uniform_real_distribution<double>(0.25, 3.0)(rng);
      std::vector<Tensor<double>> in{random_tensor({c, h, w}, rng), random_tensor({c}, rng),
                                     random_tensor({c, d}, rng), random_tensor({c, d}, rng),
                                     random_tensor({d}, rng)};
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            HeadParams<double> p{x[1], x[2], x[3], x[4]};
            return head_forward(x[0], p, cfg).y_hat;
          },
          in, eps);
      out.push_back({"head", i, r});
    }
    {
      const std::size_t c = pick(rng, 2, 4), d = pick(rng, 2, 4);
      const std::size_t h = pick(rng, 2, 4), w = pick(rng, 2, 4);
      HeadConfig cfg;
      cfg.hidden = d;
      cfg.k_min = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
      TrainingTarget target;
      target.label = static_cast<int>(rng() % 2);
      const bool guided = rng() % 2 == 0;
      if (guided) {
        std::vector<std::uint8_t> labels(h * w, 0);
        if (target.label == 1) {
          for (auto& l : labels) l = rng() % 3 == 0;
          labels[rng() % labels.size()] = 1;
        }
        target.patch_labels = labels;
      }
      const ClassWeights weights{std::uniform_real_distribution<double>(0.5, 2.0)(rng),
                                 std::uniform_real_distribution<double>(0.5, 2.0)(rng)};
      std::vector<Tensor<double>> in{random_tensor({c, h, w}, rng), random_tensor({c}, rng),
                                     random_tensor({c, d}, rng), random_tensor({c, d}, rng),
                                     random_tensor({d}, rng)};
      // The scale coefficients are graph constants; finite differences must
      // see them frozen at the base point as well.
      std::vector<double> alpha;
      {
        NoGradGuard g;
        HeadParams<double> p{in[1], in[2], in[3], in[4]};
        alpha = training_loss(head_forward(in[0], p, cfg), target, weights).report.alpha;
      }
      auto r = grad_check(
          [&](const std::vector<Tensor<double>>& x) {
            HeadParams<double> p{x[1], x[2], x[3], x[4]};
            auto o = head_forward(x[0], p, cfg);
            std::vector<PartialLoss<double>> parts{
                {"image", image_loss(o.y_hat, target.label, weights)}};
            if (target.patch_labels) {
              parts.push_back({"patch", patch_loss(o.y_tilde, *target.patch_labels)});
            }
            return weighted_loss<double>(parts, alpha);
          },
          in, eps);
      out.push_back({"training_loss", i, r});
    }
  }
  return out;
}

std::vector<CheckOutcome> run_selftest(std::uint64_t seed) {
  std::vector<CheckOutcome> out;
  auto record = [&](std::string name, bool ok, std::string detail = {}) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  auto guarded = [&](const std::string& name, const std::function<std::string()>& fn) {
    try {
      auto failure = fn();
      record(name, failure.empty(), failure);
    } catch (const std::exception& e) {
      record(name, false, std::string("exception: ") + e.what());
    }
  };
  Rng rng(seed);

  guarded("conv2d matches direct loops", [&]() -> std::string {
    auto x = random_tensor({1, 2, 5, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto y = conv2d(x, w, b, {1, 1}, {1, 1});
    double worst = 0.0;
    for (std::size_t o = 0; o < 3; ++o) {
      for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
          double acc = b.at(o);
          for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t kr = 0; kr < 3; ++kr) {
              for (std::size_t kc = 0; kc < 3; ++kc) {
                const auto sr = static_cast<std::ptrdiff_t>(r + kr) - 1;
                const auto sc = static_cast<std::ptrdiff_t>(c + kc) - 1;
                if (sr < 0 || sc < 0 || sr >= 5 || sc >= 5) continue;
                acc += x.at((i * 5 + static_cast<std::size_t>(sr)) * 5 + static_cast<std::size_t>(sc)) *
                       w.at(((o * 2 + i) * 3 + kr) * 3 + kc);
              }
            }
          }
          worst = std::max(worst, std::abs(acc - y.at((o * 5 + r) * 5 + c)));
        }
      }
    }
    return worst < 1e-9 ? "" : "max deviation " + fmt(worst);
  });

  guarded("avg_pool_patches hand case", [&]() -> std::string {
    Tensor<double> u({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto p = avg_pool_patches(u, {2, 2}, {1, 1});
    const std::vector<double> want{3, 4, 6, 7};
    for (std::size_t k = 0; k < 4; ++k) {
      if (std::abs(p.at(k) - want[k]) > 1e-12) return "patch " + std::to_string(k) + " wrong";
    }
    return "";
  });

  guarded("patch labels match block-max then window-max", [&]() -> std::string {
    for (int t = 0; t < 20; ++t) {
      const Size2 fe{pick(rng, 2, 6), pick(rng, 2, 6)};
      const std::size_t f = pick(rng, 1, 4);
      Mask m(fe.h * f, fe.w * f, 0);
      for (auto& v : m.data()) v = rng() % 17 == 0;
      const Size2 kernel{pick(rng, 1, fe.h), pick(rng, 1, fe.w)};
      const Size2 stride{pick(rng, 1, 2), pick(rng, 1, 2)};
      const auto got = patch_labels(m, fe, kernel, stride);
      const std::size_t rows = (fe.h - kernel.h) / stride.h + 1, cols = (fe.w - kernel.w) / stride.w + 1;
      if (got.size() != rows * cols) return "label count";
      for (std::size_t k = 0; k < got.size(); ++k) {
        const std::size_t r0 = (k / cols) * stride.h * f, c0 = (k % cols) * stride.w * f;
        std::uint8_t any = 0;
        for (std::size_t r = r0; r < r0 + kernel.h * f; ++r) {
          for (std::size_t c = c0; c < c0 + kernel.w * f; ++c) any |= m(r, c);
        }
        if (any != got[k]) return "window " + std::to_string(k);
      }
    }
    return "";
  });

  guarded("aggregation matches direct summation", [&]() -> std::string {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
      const std::size_t k = pick(rng, 1, 6);
      std::vector<double> yt(k), w(k);
      for (auto& v : yt) v = u(rng);
      for (auto& v : w) v = u(rng);
      const double kmin = 0.1 + 4.0 * u(rng);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        num += w[i] * yt[i];
        den += w[i];
      }
      const double want = num / std::max(den, kmin);
      if (std::abs(aggregate(yt, w, kmin) - want) > 1e-12) return "aggregate";
      if (den <= kmin) {
        const std::size_t i = rng() % k;
        if (std::abs(removal_delta(yt, w, i, kmin) + w[i] * yt[i] / kmin) > 1e-12) {
          return "removal delta in the linear regime";
        }
      }
    }
    return "";
  });

  guarded("loss scaling gives twice the largest loss", [&]() -> std::string {
    std::uniform_real_distribution<double> u(0.01, 5.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<PartialLoss<double>> parts{{"a", Tensor<double>::scalar(u(rng))},
                                             {"b", Tensor<double>::scalar(u(rng))}};
      auto c = compound_loss<double>(parts);
      const double want = 2.0 * std::max(parts[0].value.item(), parts[1].value.item());
      if (std::abs(c.total.item() - want) > 1e-9) return "total " + fmt(c.total.item());
    }
    return "";
  });

  guarded("mask filtering rules", [&]() -> std::string {
    const Mask empty(2, 3, 0);
    Mask lesion(2, 3, 0);
    lesion(1, 2) = 1;
    if (filter_mask(empty, 1, true)) return "empty mask on a positive image kept";
    if (filter_mask(empty, 1, false)) return "empty mask on a positive image kept";
    if (!filter_mask(lesion, 1, false) || *filter_mask(lesion, 1, false) != lesion) return "positive mask";
    if (filter_mask(lesion, 0, false)) return "negative image used without negative masks";
    auto z = filter_mask(lesion, 0, true);
    if (!z || any_positive(*z)) return "negative image mask not zeroed";
    if (filter_mask(std::nullopt, 1, true)) return "missing mask";
    return "";
  });

  guarded("ROC AUC equals pair counting", [&]() -> std::string {
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = pick(rng, 2, 50);
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % 7) / 6.0;
        y[i] = static_cast<int>(rng() % 2);
      }
      y[0] = 0;
      y[1] = 1;
      double pairs = 0.0, conc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (y[i] != 1 || y[j] != 0) continue;
          pairs += 1.0;
          conc += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
      }
      auto m = classification_metrics(s, y);
      if (!m.roc_auc || std::abs(*m.roc_auc - conc / pairs) > 1e-12) return "AUC mismatch";
      if (std::abs(m.balanced_accuracy - 0.5 * (m.sensitivity + m.specificity)) > 1e-12) {
        return "balanced accuracy identity";
      }
    }
    return "";
  });

  guarded("IoU binarisation keeps the mask area", [&]() -> std::string {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      Grid<double> render(8, 12);
      for (auto& v : render.data()) v = std::round(u(rng) * 4.0);
      Mask m(8, 12, 0);
      for (auto& v : m.data()) v = rng() % 5 == 0;
      m(0, 0) = 1;
      const auto area = count_positive(m);
      if (top_k_pixels(render, area).size() != area) return "selected pixel count";
      const auto iou = iou_localization(render, m, IouMode::at0, 1.0);
      if (!iou || *iou < 0.0 || *iou > 1.0) return "IoU range";
    }
    return "";
  });

  guarded("synthetic samples are MIL-consistent and deterministic", [&]() -> std::string {
    SynthConfig cfg;
    auto a = generate(cfg, 24, seed);
    auto b = generate(cfg, 24, seed);
    if (a != b) return "generation is not deterministic";
    for (const auto& s : a) {
      if ((s.label == 1) != any_positive(s.mask)) return "label disagrees with mask";
      for (const auto& g : s.groups) {
        bool hit = false;
        for (std::size_t r = g.rect.y0; r < g.rect.y1; ++r) {
          for (std::size_t c = g.rect.x0; c < g.rect.x1; ++c) hit = hit || s.mask(r, c);
        }
        if ((g.label == 1) != hit) return "group label disagrees with mask";
      }
    }
    return "";
  });

  guarded("dataset file round-trip", [&]() -> std::string {
    SynthConfig cfg;
    auto samples = generate(cfg, 5, seed + 1);
    const auto path = std::filesystem::temp_directory_path() /
                      ("emil-selftest-" + std::to_string(seed) + "-" + std::to_string(rng()) + ".emd1");
    write_dataset(samples, path);
    const auto size = std::filesystem::file_size(path);
    auto back = read_dataset(path);
    std::filesystem::remove(path);
    if (back != samples) return "round-trip changed the samples";
    if (size != dataset_file_size(samples)) return "file size differs from the format arithmetic";
    return "";
  });

  guarded("gradients agree with finite differences", [&]() -> std::string {
    for (const auto& c : gradient_suite(seed, 2)) {
      if (!c.result.passed(1e-4)) {
        return c.name + " instance " + std::to_string(c.instance) + ": relative error " +
               fmt(c.result.max_relative_error) + " at " + c.result.worst;
      }
    }
    return "";
  });

  return out;
}

}  // namespace emil
