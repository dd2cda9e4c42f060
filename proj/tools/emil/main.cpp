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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emil/config.hpp"
#include "emil/io.hpp"
#include "emil/selftest.hpp"
#include "emil/synth.hpp"
#include "emil/train.hpp"
#include "report.hpp"

namespace {

using nlohmann::json;
using namespace emil;

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool json_lines = false;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) apply_config(cfg, KeyValueConfig::load(c.config_path));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.synth.seed = *c.seed;
  }
  return cfg;
}

void emit(const Common& c, const json& event) {
  if (c.json_lines) {
    std::cout << event.dump() << "\n";
  } else {
    std::cerr << event.dump() << "\n";
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::filesystem::path fold_path(const std::filesystem::path& base, std::size_t folds, std::size_t f) {
  if (folds <= 1) return base;
  auto p = base;
  p += ".fold" + std::to_string(f);
  return p;
}

std::vector<std::size_t> split_part(const Split& s, const std::string& name, std::size_t n) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

std::vector<Split> run_splits(const RunConfig& cfg, const std::vector<Sample>& samples) {
  if (cfg.train.folds <= 1) return {run_split(cfg, samples)};
  return fold_splits(labels_of(samples), cfg.train.folds, cfg.seed);
}

int cmd_generate(const Common& common, const std::string& out) {
  auto cfg = load_config(common);
  if (!out.empty()) cfg.dataset = out;
  if (cfg.dataset.empty()) throw ConfigError("generate needs --out or data.path");
  cfg.validate(false);
  const auto samples = generate(cfg.synth, cfg.dataset_size, cfg.seed);
  write_dataset(samples, cfg.dataset);
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.label == 1;
  emit(common, {{"event", "generate"},
                {"path", cfg.dataset.string()},
                {"count", samples.size()},
                {"positives", pos},
                {"bytes", dataset_file_size(samples)}});
  return 0;
}

int cmd_train(const Common& common, const std::string& out, std::size_t folds) {
  auto cfg = load_config(common);
  if (!out.empty()) cfg.checkpoint = out;
  if (folds > 0) cfg.train.folds = folds;
  if (cfg.checkpoint.empty()) throw ConfigError("train needs --out or train.checkpoint");
  cfg.validate(true);
  const auto samples = read_dataset(cfg.dataset);
  const auto splits = run_splits(cfg, samples);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const auto ckpt = fold_path(cfg.checkpoint, splits.size(), f);
    auto log_path = ckpt;
    log_path += ".log.jsonl";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    auto outcome = train(cfg, samples, splits[f], [&](const EpochRecord& r) {
      auto j = cli::to_json(r);
      j["fold"] = f;
      log << j.dump() << "\n";
      log.flush();
      emit(common, j);
    });
    save_checkpoint(outcome.model, ckpt);
    json done = {{"event", "train"},
                 {"fold", f},
                 {"checkpoint", ckpt.string()},
                 {"best_epoch", outcome.best_epoch},
                 {"best_val_balanced_accuracy", outcome.best_val_balanced_accuracy},
                 {"epochs", outcome.log.size()}};
    log << done.dump() << "\n";
    emit(common, done);
  }
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& out,
             std::size_t folds, bool records) {
  auto cfg = load_config(common);
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (folds > 0) cfg.train.folds = folds;
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or train.checkpoint");
  cfg.validate(true);
  const auto samples = read_dataset(cfg.dataset);
  const auto splits = run_splits(cfg, samples);

  std::vector<MetricsReport> image, group;
  json per_fold = json::array();
  json result;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const auto model = load_checkpoint(fold_path(cfg.checkpoint, splits.size(), f));
    const auto indices = split_part(splits[f], cfg.eval.split, samples.size());
    const auto ev = evaluate(model, samples, indices, cfg.eval);
    image.push_back(ev.image);
    if (ev.group) group.push_back(*ev.group);
    per_fold.push_back(cli::to_json(ev, records));
  }
  if (splits.size() == 1) {
    result = per_fold[0];
  } else {
    result = {{"image", cli::to_json(average_reports(image))},
              {"group", group.empty() ? json(nullptr) : cli::to_json(average_reports(group))},
              {"per_fold", per_fold}};
  }
  result["split"] = cfg.eval.split;
  result["folds"] = splits.size();
  result["seed"] = cfg.seed;
  if (!out.empty()) write_text(out, result.dump(2) + "\n");
  if (common.json_lines) {
    std::cout << result.dump() << "\n";
  } else {
    std::cout << result.dump(2) << "\n";
  }
  return 0;
}

int cmd_heatmap(const Common& common, const std::string& checkpoint, std::size_t index,
                const std::string& out) {
  auto cfg = load_config(common);
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (cfg.checkpoint.empty()) throw ConfigError("heatmap needs --checkpoint or train.checkpoint");
  if (out.empty()) throw ConfigError("heatmap needs --out <prefix>");
  cfg.validate(true);
  const auto samples = read_dataset(cfg.dataset);
  if (index >= samples.size()) {
    throw ConfigError("--index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(samples.size()) + " samples)");
  }
  const auto model = load_checkpoint(cfg.checkpoint);
  const auto& s = samples[index];
  const auto pred = predict(model, s);
  const auto& hc = model.head_config;
  const auto maps = build_heatmaps(pred, hc.kernel, hc.stride,
                                   model.encoder.config.feature_extent(s.image.extent()),
                                   s.image.extent());
  const std::string prefix = out;
  write_pgm(prefix + ".prob.pgm", maps.first.render);
  write_pgm(prefix + ".attn.pgm", maps.second.render);
  write_grid_text(prefix + ".prob.txt", maps.first.grid);
  write_grid_text(prefix + ".attn.txt", maps.second.grid);
  emit(common, {{"event", "heatmap"},
                {"index", index},
                {"label", s.label},
                {"y_hat", pred.y_hat},
                {"attention_mass", pred.attention_mass()},
                {"prob", prefix + ".prob.pgm"},
                {"attn", prefix + ".attn.pgm"}});
  return 0;
}

int cmd_gradcheck(const Common& common, std::size_t instances, double eps, double tolerance) {
  const auto cfg = load_config(common);
  const auto cases = gradient_suite(cfg.seed, instances, eps);
  std::map<std::string, double> worst;
  bool ok = true;
  for (const auto& c : cases) {
    worst[c.name] = std::max(worst[c.name], c.result.max_relative_error);
    ok = ok && c.result.passed(tolerance);
  }
  for (const auto& [name, err] : worst) {
    const bool pass = err < tolerance;
    if (common.json_lines) {
      emit(common, {{"event", "gradcheck"}, {"op", name}, {"max_relative_error", err}, {"passed", pass}});
    } else {
      std::printf("%-20s max rel err %.3e  %s\n", name.c_str(), err, pass ? "ok" : "FAIL");
    }
  }
  return ok ? 0 : kExitRuntime;
}

int cmd_selftest(const Common& common) {
  const auto cfg = load_config(common);
  bool ok = true;
  for (const auto& c : run_selftest(cfg.seed)) {
    ok = ok && c.passed;
    if (common.json_lines) {
      emit(common, {{"event", "selftest"}, {"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    } else {
      std::printf("[%s] %s%s%s\n", c.passed ? "pass" : "FAIL", c.name.c_str(),
                  c.detail.empty() ? "" : ": ", c.detail.c_str());
    }
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emil: attention-based multiple instance learning toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string out, checkpoint;
  std::size_t folds = 0, index = 0, instances = 20;
  double eps = 1e-5, tolerance = 1e-4;
  bool records = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value configuration file");
    sub->add_option("--seed", common.seed, "override the seed");
    sub->add_flag("--json", common.json_lines, "JSON-lines log on stdout");
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out, "dataset file");

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(tr);
  tr->add_option("--out", out, "checkpoint path");
  tr->add_option("--folds", folds, "k-fold cross-validation");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint path");
  ev->add_option("--out", out, "metrics JSON file");
  ev->add_option("--folds", folds, "k-fold cross-validation");
  ev->add_flag("--records", records, "include per-sample records");

  auto* hm = app.add_subcommand("heatmap", "write probability and attention heatmaps");
  add_common(hm);
  hm->add_option("--checkpoint", checkpoint, "checkpoint path");
  hm->add_option("--index", index, "sample index")->required();
  hm->add_option("--out", out, "output prefix");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc);
  gc->add_option("--instances", instances, "random instances per operation");
  gc->add_option("--eps", eps, "finite-difference step");
  gc->add_option("--tolerance", tolerance, "maximum relative error");

  auto* st = app.add_subcommand("selftest", "oracle and invariant checks");
  add_common(st);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_generate(common, out);
    if (tr->parsed()) return cmd_train(common, out, folds);
    if (ev->parsed()) return cmd_eval(common, checkpoint, out, folds, records);
    if (hm->parsed()) return cmd_heatmap(common, checkpoint, index, out);
    if (gc->parsed()) return cmd_gradcheck(common, instances, eps, tolerance);
    if (st->parsed()) return cmd_selftest(common);
  } catch (const ConfigError& e) {
    std::cerr << "emil: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "emil: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
