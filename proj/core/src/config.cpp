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

#include "emil/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace emil {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + what);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) bad_value(key, v, "a finite number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a finite number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list");
  return out;
}

Size2 parse_size2(const std::string& key, const std::string& v) {
  auto l = parse_list(key, v);
  if (l.size() == 1) return {l[0], l[0]};
  if (l.size() == 2) return {l[0], l[1]};
  bad_value(key, v, "'n' or 'h,w'");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define EMIL_SIZE(path)                                                                      \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.path); }}
#define EMIL_DOUBLE(path)                                                                    \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_double(k, v); }, \
        [](const RunConfig& c) { return fmt_double(c.path); }}
#define EMIL_BOOL(path)                                                                      \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.path ? "true" : "false"); }}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                       c.seed = parse_u64(k, v);
                       c.synth.seed = c.seed;
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"data.path", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; },
                          [](const RunConfig& c) { return c.dataset.string(); }}},
      {"data.size", EMIL_SIZE(dataset_size)},
      {"train.checkpoint",
       Field{[](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; },
             [](const RunConfig& c) { return c.checkpoint.string(); }}},

      {"synth.height", EMIL_SIZE(synth.height)},
      {"synth.width", EMIL_SIZE(synth.width)},
      {"synth.positive_fraction", EMIL_DOUBLE(synth.positive_fraction)},
      {"synth.lesions_min", EMIL_SIZE(synth.lesions_min)},
      {"synth.lesions_max", EMIL_SIZE(synth.lesions_max)},
      {"synth.radius_min", EMIL_DOUBLE(synth.radius_min)},
      {"synth.radius_max", EMIL_DOUBLE(synth.radius_max)},
      {"synth.contrast", EMIL_DOUBLE(synth.contrast)},
      {"synth.contrast_jitter", EMIL_DOUBLE(synth.contrast_jitter)},
      {"synth.groups", EMIL_SIZE(synth.groups)},
      {"synth.band_amplitude", EMIL_DOUBLE(synth.band_amplitude)},
      {"synth.noise_std", EMIL_DOUBLE(synth.noise_std)},
      {"synth.pixel_noise_std", EMIL_DOUBLE(synth.pixel_noise_std)},
      {"synth.distractors_max", EMIL_SIZE(synth.distractors_max)},

      {"encoder.channels",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.encoder.stage_channels = parse_list(k, v);
             },
             [](const RunConfig& c) { return join(c.encoder.stage_channels); }}},
      {"encoder.strides",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.encoder.stage_strides = parse_list(k, v);
             },
             [](const RunConfig& c) { return join(c.encoder.stage_strides); }}},
      {"encoder.blocks", EMIL_SIZE(encoder.blocks_per_stage)},
      {"encoder.input_channels", EMIL_SIZE(encoder.input_channels)},
      {"encoder.upsample", EMIL_SIZE(encoder.feature_upsample_factor)},
      {"encoder.batch_norm", EMIL_BOOL(encoder.batch_norm)},

      {"head.kernel",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.head.kernel = parse_size2(k, v);
             },
             [](const RunConfig& c) { return join({c.head.kernel.h, c.head.kernel.w}); }}},
      {"head.stride",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.head.stride = parse_size2(k, v);
             },
             [](const RunConfig& c) { return join({c.head.stride.h, c.head.stride.w}); }}},
      {"head.k_min", EMIL_DOUBLE(head.k_min)},
      {"head.hidden", EMIL_SIZE(head.hidden)},
      {"head.aggregator",
       Field{[](RunConfig& c, const std::string&, const std::string& v) {
               try {
                 c.head.aggregator = aggregator_from_string(v);
               } catch (const std::invalid_argument& e) {
                 throw ConfigError(std::string("config key 'head.aggregator': ") + e.what());
               }
             },
             [](const RunConfig& c) { return to_string(c.head.aggregator); }}},

      {"guidance.use_masks", EMIL_BOOL(guidance.use_masks)},
      {"guidance.use_negative_masks", EMIL_BOOL(guidance.use_negative_masks)},
      {"guidance.dilate", EMIL_SIZE(guidance.corruption.dilate)},
      {"guidance.erode", EMIL_SIZE(guidance.corruption.erode)},
      {"guidance.drop_p", EMIL_DOUBLE(guidance.corruption.drop_p)},

      {"optim.lr", EMIL_DOUBLE(optim.lr)},
      {"optim.beta1", EMIL_DOUBLE(optim.beta1)},
      {"optim.beta2", EMIL_DOUBLE(optim.beta2)},
      {"optim.eps", EMIL_DOUBLE(optim.eps)},

      {"train.batch_size", EMIL_SIZE(train.batch_size)},
      {"train.epochs", EMIL_SIZE(train.max_epochs)},
      {"train.patience", EMIL_SIZE(train.patience)},
      {"train.class_weighting", EMIL_BOOL(train.class_weighting)},
      {"train.folds", EMIL_SIZE(train.folds)},

      {"split.val", EMIL_DOUBLE(split.val)},
      {"split.test", EMIL_DOUBLE(split.test)},

      {"eval.threshold", EMIL_DOUBLE(eval.threshold)},
      {"eval.conf", EMIL_DOUBLE(eval.conf)},
      {"eval.split", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                             if (v != "train" && v != "val" && v != "test" && v != "all") {
                               bad_value(k, v, "one of train, val, test, all");
                             }
                             c.eval.split = v;
                           },
                           [](const RunConfig& c) { return c.eval.split; }}},
  };
  return table;
}

#undef EMIL_SIZE
#undef EMIL_DOUBLE
#undef EMIL_BOOL

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto stripped = trim(line);
    if (stripped.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(stripped.substr(0, eq));
    auto value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(key, value);
    if (end == text.size()) break;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool KeyValueConfig::contains(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : fields()) keys.push_back(k);
  return keys;
}

void apply_config(RunConfig& config, const KeyValueConfig& entries) {
  std::vector<std::string> unknown;
  for (const auto& [k, _] : entries.entries()) {
    if (!fields().count(k)) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }
  for (const auto& [k, v] : entries.entries()) fields().at(k).set(config, k, v);
}

RunConfig run_config_from(const KeyValueConfig& entries) {
  RunConfig c;
  apply_config(c, entries);
  return c;
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(config) + "\n";
  return out;
}

void RunConfig::validate(bool require_dataset) const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { synth.validate(); });
  wrap([&] { encoder.validate(); });
  wrap([&] { head.validate(); });
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be > 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  }
  if (!(optim.eps > 0.0)) throw ConfigError("optim.eps must be > 0");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (train.max_epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (train.folds == 0) throw ConfigError("train.folds must be >= 1");
  if (split.val <= 0.0 || split.test < 0.0 || split.val + split.test >= 1.0) {
    throw ConfigError("split.val must be > 0, split.test >= 0 and their sum below 1");
  }
  if (guidance.corruption.drop_p < 0.0 || guidance.corruption.drop_p > 1.0) {
    throw ConfigError("guidance.drop_p must lie in [0, 1]");
  }
  if (dataset_size == 0) throw ConfigError("data.size must be >= 1");
  if (require_dataset) {
    if (dataset.empty()) throw ConfigError("data.path is required");
    if (!std::filesystem::exists(dataset)) {
      throw ConfigError("dataset file " + dataset.string() + " does not exist");
    }
  }
}

}  // namespace emil
