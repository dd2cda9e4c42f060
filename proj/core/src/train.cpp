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

#include "emil/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "emil/io.hpp"
#include "emil/ops.hpp"

namespace emil {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5eed0001;
constexpr std::uint64_t kCorruptionStream = 0x5eed0002;
constexpr std::uint64_t kHeadStream = 0x5eed0003;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
Tensor<T> mean_of(const std::vector<Tensor<T>>& xs) {
  Tensor<T> acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, static_cast<T>(1.0 / static_cast<double>(xs.size())));
}

double balanced_accuracy_of(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty()) return 0.0;
  std::vector<double> clipped(scores.size());
  std::transform(scores.begin(), scores.end(), clipped.begin(),
                 [](double s) { return std::clamp(s, 0.0, 1.0); });
  return classification_metrics(clipped, labels).balanced_accuracy;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_parameters() const {
  auto out = encoder.named_parameters();
  for (auto& p : head.named_parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_buffers() const {
  return encoder.named_buffers();
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
HeadOutput<T> Model<T>::forward(const Tensor<T>& image) const {
  return emil::forward(image, encoder, head, head_config);
}

template <typename T>
std::vector<HeadOutput<T>> Model<T>::forward_batch(const Tensor<T>& images, bool training) const {
  std::vector<HeadOutput<T>> out;
  for (auto& u : encode_batch(images, encoder, training)) {
    out.push_back(head_forward(u, head, head_config));
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> copy_of(const Tensor<T>& t) {
  return t.defined() ? t.clone() : Tensor<T>();
}

template <typename T>
std::optional<NormParams<T>> copy_of(const std::optional<NormParams<T>>& n) {
  if (!n) return std::nullopt;
  return NormParams<T>{n->gamma.clone(), n->beta.clone(), n->running_mean.clone(),
                       n->running_var.clone()};
}

}  // namespace

template <typename T>
Model<T> Model<T>::clone() const {
  Model out;
  out.head_config = head_config;
  out.encoder.config = encoder.config;
  for (const auto& b : encoder.blocks) {
    ResidualBlock<T> nb;
    nb.stride = b.stride;
    nb.conv1 = {b.conv1.weight.clone(), copy_of(b.conv1.bias)};
    nb.conv2 = {b.conv2.weight.clone(), copy_of(b.conv2.bias)};
    if (b.projection) {
      nb.projection = ConvParams<T>{b.projection->weight.clone(), copy_of(b.projection->bias)};
    }
    nb.norm1 = copy_of(b.norm1);
    nb.norm2 = copy_of(b.norm2);
    nb.projection_norm = copy_of(b.projection_norm);
    out.encoder.blocks.push_back(std::move(nb));
  }
  out.head = {head.o.clone(), head.a.clone(), head.b.clone(), head.c.clone()};
  return out;
}

template struct Model<float>;
template struct Model<double>;

Model<float> init_model(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed) {
  encoder.validate();
  head.validate();
  Model<float> m;
  m.encoder = init_encoder<float>(encoder, seed);
  m.head = init_head<float>(encoder.output_channels(), head.hidden, mix(seed, kHeadStream));
  m.head_config = head;
  return m;
}

Tensor<float> image_tensor(const Sample& sample) {
  const auto& g = sample.image;
  return Tensor<float>({1, g.rows(), g.cols()}, g.data());
}

Tensor<float> batch_tensor(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("batch_tensor: empty batch");
  const Size2 extent = samples[indices.front()].image.extent();
  std::vector<float> data;
  data.reserve(indices.size() * extent.h * extent.w);
  for (auto i : indices) {
    if (i >= samples.size()) throw std::out_of_range("batch_tensor: sample index out of range");
    const auto& g = samples[i].image;
    if (g.extent() != extent) {
      throw std::invalid_argument("batch_tensor: sample " + std::to_string(i) + " is " +
                                  to_string(g.extent()) + ", batch is " + to_string(extent));
    }
    data.insert(data.end(), g.data().begin(), g.data().end());
  }
  return Tensor<float>({indices.size(), 1, extent.h, extent.w}, std::move(data));
}

Adam::Adam(std::vector<Tensor<float>> params, const OptimizerConfig& config)
    : params_(std::move(params)), config_(config) {
  if (config_.lr < 0.0) throw std::invalid_argument("Adam: negative learning rate");
  for (const auto& p : params_) {
    if (!p.is_leaf()) throw std::invalid_argument("Adam: parameters must be leaf tensors");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto x = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double gj = g[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double update = config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      x[j] = static_cast<float>(static_cast<double>(x[j]) - update);
    }
  }
}

std::vector<std::optional<std::vector<std::uint8_t>>> guidance_targets(
    std::span<const Sample> samples, std::span<const std::size_t> indices,
    const GuidanceConfig& guidance, const EncoderConfig& encoder, const HeadConfig& head,
    std::uint64_t seed) {
  std::vector<std::optional<std::vector<std::uint8_t>>> out(indices.size());
  if (!guidance.use_masks) return out;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto& s = samples[indices[n]];
    std::optional<Mask> mask = s.mask;
    if (guidance.corruption.active() && s.label == 1) {
      std::mt19937_64 rng(mix(mix(seed, kCorruptionStream), indices[n]));
      mask = corrupt_mask(*mask, guidance.corruption, rng);
    }
    auto kept = filter_mask(mask, s.label, guidance.use_negative_masks);
    if (!kept) continue;
    const auto fe = encoder.feature_extent(kept->extent());
    out[n] = patch_labels(*kept, fe, head.kernel, head.stride);
  }
  return out;
}

TrainOutcome train(const RunConfig& config, std::span<const Sample> samples, const Split& split,
                   const EpochCallback& on_epoch) {
  return train(config, init_model(config.encoder, config.head, config.seed), samples, split,
               on_epoch);
}

TrainOutcome train(const RunConfig& config, Model<float> model, std::span<const Sample> samples,
                   const Split& split, const EpochCallback& on_epoch) {
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  if (split.val.empty()) throw std::invalid_argument("train: empty validation split");
  if (config.train.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
  for (auto i : split.train) {
    if (i >= samples.size()) throw std::out_of_range("train: split index out of range");
  }

  const auto targets = guidance_targets(samples, split.train, config.guidance, config.encoder,
                                        config.head, config.seed);
  std::vector<int> train_labels;
  for (auto i : split.train) train_labels.push_back(samples[i].label);
  const ClassWeights weights = config.train.class_weighting
                                   ? ClassWeights::inverse_frequency(train_labels)
                                   : ClassWeights{};

  Adam optimizer(model.parameters(), config.optim);
  std::mt19937_64 rng(mix(config.seed, kShuffleStream));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainOutcome outcome;
  double best = -1.0;
  std::size_t since_best = 0;
  const std::size_t bs = config.train.batch_size;

  for (std::size_t epoch = 0; epoch < config.train.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<double> seen_scores;
    std::vector<int> seen_labels;
    std::size_t batches = 0, patch_batches = 0;
    std::vector<double> alpha_sum;

    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const std::size_t stop = std::min(order.size(), start + bs);
      optimizer.zero_grad();
      std::vector<Tensor<float>> image_terms, patch_terms;
      std::vector<std::size_t> batch;
      for (std::size_t j = start; j < stop; ++j) batch.push_back(split.train[order[j]]);
      auto outputs = model.forward_batch(batch_tensor(samples, batch), true);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t n = order[j];
        const auto& s = samples[split.train[n]];
        const auto& out = outputs[j - start];
        image_terms.push_back(image_loss(out.y_hat, s.label, weights));
        if (targets[n]) patch_terms.push_back(patch_loss(out.y_tilde, *targets[n]));
        seen_scores.push_back(static_cast<double>(out.y_hat.item()));
        seen_labels.push_back(s.label);
      }
      std::vector<PartialLoss<float>> parts;
      parts.push_back({"image", mean_of(image_terms)});
      if (!patch_terms.empty()) parts.push_back({"patch", mean_of(patch_terms)});
      auto compound = compound_loss<float>(parts);
      const double total = static_cast<double>(compound.total.item());
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b),
                            epoch, b);
      }
      compound.total.backward();
      optimizer.step();

      if (b == 0) rec.first_batch_loss = total;
      rec.loss += total;
      rec.l_image += compound.values[0];
      if (compound.values.size() > 1) {
        rec.l_patch = rec.l_patch.value_or(0.0) + compound.values[1];
        ++patch_batches;
      }
      if (alpha_sum.size() < compound.alpha.size()) alpha_sum.resize(compound.alpha.size(), 0.0);
      for (std::size_t k = 0; k < compound.alpha.size(); ++k) alpha_sum[k] += compound.alpha[k];
      ++batches;
    }
    rec.loss /= static_cast<double>(batches);
    rec.l_image /= static_cast<double>(batches);
    if (rec.l_patch) *rec.l_patch /= static_cast<double>(patch_batches);
    alpha_sum[0] /= static_cast<double>(batches);
    if (alpha_sum.size() > 1) alpha_sum[1] /= static_cast<double>(patch_batches);
    rec.alpha = alpha_sum;
    rec.train_balanced_accuracy = balanced_accuracy_of(seen_scores, seen_labels);

    rec.val = evaluate(model, samples, split.val, config.eval).image;
    if (rec.val.balanced_accuracy > best) {
      best = rec.val.balanced_accuracy;
      rec.best = true;
      outcome.best_epoch = epoch;
      outcome.best_val_balanced_accuracy = best;
      outcome.model = model.clone();
      since_best = 0;
    } else {
      ++since_best;
    }
    outcome.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.train.patience > 0 && since_best >= config.train.patience) break;
  }
  return outcome;
}

std::vector<std::size_t> group_patches(const Rect& rect, std::size_t rows, std::size_t cols,
                                       Size2 kernel, Size2 stride, Size2 feature_extent,
                                       Size2 input_extent) {
  const double sy = static_cast<double>(input_extent.h) / static_cast<double>(feature_extent.h);
  const double sx = static_cast<double>(input_extent.w) / static_cast<double>(feature_extent.w);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double cy = (static_cast<double>(r * stride.h) + 0.5 * static_cast<double>(kernel.h)) * sy;
      const double cx = (static_cast<double>(c * stride.w) + 0.5 * static_cast<double>(kernel.w)) * sx;
      if (rect.contains(static_cast<std::size_t>(std::floor(cy)),
                        static_cast<std::size_t>(std::floor(cx)))) {
        out.push_back(r * cols + c);
      }
    }
  }
  return out;
}

Prediction predict(const Model<float>& model, const Sample& sample) {
  NoGradGuard guard;
  return model.forward(image_tensor(sample)).prediction();
}

constexpr std::size_t kEvalBatch = 64;

Evaluation evaluate(const Model<float>& model, std::span<const Sample> samples,
                    std::span<const std::size_t> indices, const EvalConfig& config) {
  if (indices.empty()) throw std::invalid_argument("evaluate: no samples selected");
  NoGradGuard guard;
  Evaluation ev;
  std::vector<double> scores, group_scores;
  std::vector<int> labels, group_labels;
  std::vector<double> iou0, iouc;
  const auto& hc = model.head_config;
  if (model.encoder.config.input_channels != 1) {
    throw std::invalid_argument("evaluate: checkpoint expects " +
                                std::to_string(model.encoder.config.input_channels) +
                                " input channels, data has 1");
  }
  std::vector<Prediction> preds;
  preds.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    for (auto& out : model.forward_batch(batch_tensor(samples, chunk), false)) {
      preds.push_back(out.prediction());
    }
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t idx = indices[k];
    const auto& s = samples[idx];
    const Size2 input = s.image.extent();
    const Size2 fe = model.encoder.config.feature_extent(input);
    const auto& pred = preds[k];

    SampleRecord r;
    r.index = idx;
    r.label = s.label;
    r.y_hat = std::clamp(pred.y_hat, 0.0, 1.0);
    r.attention_mass = pred.attention_mass();
    if (s.label == 1 && any_positive(s.mask)) {
      auto maps = build_heatmaps(pred, hc.kernel, hc.stride, fe, input);
      r.iou_at_0 = iou_localization(maps.first.render, s.mask, IouMode::at0, r.y_hat, config.conf);
      r.iou_at_conf =
          iou_localization(maps.first.render, s.mask, IouMode::at_conf, r.y_hat, config.conf);
      iou0.push_back(*r.iou_at_0);
      if (r.iou_at_conf) iouc.push_back(*r.iou_at_conf);
    }
    for (const auto& g : s.groups) {
      auto members = group_patches(g.rect, pred.rows, pred.cols, hc.kernel, hc.stride, fe, input);
      if (members.empty()) continue;
      const double p = std::clamp(group_probability(pred.y_tilde, pred.w, members, pred.k_min),
                                  0.0, 1.0);
      r.group_probability.push_back(p);
      r.group_label.push_back(g.label);
      group_scores.push_back(p);
      group_labels.push_back(g.label);
    }
    scores.push_back(r.y_hat);
    labels.push_back(s.label);
    ev.records.push_back(std::move(r));
  }
  ev.image = classification_metrics(scores, labels, config.threshold);
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  ev.image.iou_at_0 = mean(iou0);
  ev.image.iou_at_conf = mean(iouc);
  if (!group_scores.empty()) {
    ev.group = classification_metrics(group_scores, group_labels, config.threshold);
  }
  return ev;
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
  MetricsReport out;
  const auto n = static_cast<double>(reports.size());
  auto avg_opt = [&](auto member) -> std::optional<double> {
    double s = 0.0;
    std::size_t c = 0;
    for (const auto& r : reports) {
      if (r.*member) {
        s += *(r.*member);
        ++c;
      }
    }
    if (c == 0) return std::nullopt;
    return s / static_cast<double>(c);
  };
  out.threshold = reports.front().threshold;
  for (const auto& r : reports) {
    out.sensitivity += r.sensitivity / n;
    out.specificity += r.specificity / n;
    out.f_score += r.f_score / n;
    out.n_pos += r.n_pos;
    out.n_neg += r.n_neg;
  }
  out.balanced_accuracy = 0.5 * (out.sensitivity + out.specificity);
  out.roc_auc = avg_opt(&MetricsReport::roc_auc);
  out.pr_auc = avg_opt(&MetricsReport::pr_auc);
  out.iou_at_0 = avg_opt(&MetricsReport::iou_at_0);
  out.iou_at_conf = avg_opt(&MetricsReport::iou_at_conf);
  return out;
}

std::vector<Split> fold_splits(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw std::invalid_argument("fold_splits: need at least 3 folds");
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), 0);
  const auto folds = stratified_folds(all, labels, k, seed);
  std::vector<Split> out(k);
  for (std::size_t f = 0; f < k; ++f) {
    out[f].test = folds[f];
    out[f].val = folds[(f + 1) % k];
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f || g == (f + 1) % k) continue;
      out[f].train.insert(out[f].train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(out[f].train.begin(), out[f].train.end());
  }
  return out;
}

Split run_split(const RunConfig& config, std::span<const Sample> samples) {
  const auto labels = labels_of(samples);
  return stratified_split(labels, config.split.val, config.split.test, config.seed);
}

namespace {

nlohmann::json encoder_json(const EncoderConfig& c) {
  return {{"stage_channels", c.stage_channels},
          {"stage_strides", c.stage_strides},
          {"blocks_per_stage", c.blocks_per_stage},
          {"input_channels", c.input_channels},
          {"feature_upsample_factor", c.feature_upsample_factor},
          {"batch_norm", c.batch_norm}};
}

nlohmann::json head_json(const HeadConfig& c) {
  return {{"kernel", {c.kernel.h, c.kernel.w}},
          {"stride", {c.stride.h, c.stride.w}},
          {"k_min", c.k_min},
          {"hidden", c.hidden},
          {"aggregator", to_string(c.aggregator)}};
}

std::filesystem::path manifest_path(const std::filesystem::path& p) {
  auto m = p;
  m += ".json";
  return m;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> checkpoint_tensors(const Model<T>& model) {
  auto out = model.named_parameters();
  for (auto& b : model.named_buffers()) out.push_back(std::move(b));
  return out;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : checkpoint_tensors(model)) {
    write_emt(os, t);
    tensors.push_back({{"name", name}, {"offset", offset}, {"shape", t.shape()}});
    offset += emt_record_size(DType::f32, t.shape());
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
  nlohmann::json manifest = {{"format", "emil-checkpoint-1"},
                             {"encoder", encoder_json(model.encoder.config)},
                             {"head", head_json(model.head_config)},
                             {"bytes", offset},
                             {"tensors", tensors}};
  std::ofstream ms(manifest_path(path));
  if (!ms) throw std::runtime_error("cannot write checkpoint manifest for " + path.string());
  ms << manifest.dump(2) << "\n";
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream ms(manifest_path(path));
  if (!ms) throw std::runtime_error("cannot read checkpoint manifest " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    ms >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "emil-checkpoint-1") {
    throw std::runtime_error("unsupported checkpoint format in " + manifest_path(path).string());
  }
  EncoderConfig ec;
  const auto& je = manifest.at("encoder");
  ec.stage_channels = je.at("stage_channels").get<std::vector<std::size_t>>();
  ec.stage_strides = je.at("stage_strides").get<std::vector<std::size_t>>();
  ec.blocks_per_stage = je.at("blocks_per_stage").get<std::size_t>();
  ec.input_channels = je.at("input_channels").get<std::size_t>();
  ec.feature_upsample_factor = je.at("feature_upsample_factor").get<std::size_t>();
  ec.batch_norm = je.value("batch_norm", false);
  HeadConfig hc;
  const auto& jh = manifest.at("head");
  hc.kernel = {jh.at("kernel").at(0).get<std::size_t>(), jh.at("kernel").at(1).get<std::size_t>()};
  hc.stride = {jh.at("stride").at(0).get<std::size_t>(), jh.at("stride").at(1).get<std::size_t>()};
  hc.k_min = jh.at("k_min").get<double>();
  hc.hidden = jh.at("hidden").get<std::size_t>();
  hc.aggregator = aggregator_from_string(jh.at("aggregator").get<std::string>());

  Model<float> model = init_model(ec, hc, 0);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  auto params = checkpoint_tensors(model);
  const auto& entries = manifest.at("tensors");
  if (entries.size() != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(entries.size()) +
                             " tensors, model expects " + std::to_string(params.size()));
  }
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (entries[i].at("name").get<std::string>() != name) {
      throw std::runtime_error("checkpoint tensor " + std::to_string(i) + " is '" +
                               entries[i].at("name").get<std::string>() + "', expected '" + name + "'");
    }
    auto rec = read_emt(is, offset);
    if (rec.shape != t.shape()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               shape_string(rec.shape) + ", expected " + shape_string(t.shape()));
    }
    if (rec.dtype() != DType::f32) throw FormatError("checkpoint tensor '" + name + "' is not f32", offset);
    const auto& v = std::get<std::vector<float>>(rec.data);
    std::copy(v.begin(), v.end(), t.mutable_values().begin());
    offset += emt_record_size(DType::f32, rec.shape);
  }
  return model;
}

}  // namespace emil
