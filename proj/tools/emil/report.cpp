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

#include "report.hpp"

namespace emil::cli {

namespace {

nlohmann::json optional_value(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  return {{"balanced_accuracy", r.balanced_accuracy},
          {"f_score", r.f_score},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"roc_auc", optional_value(r.roc_auc)},
          {"pr_auc", optional_value(r.pr_auc)},
          {"iou_at_0", optional_value(r.iou_at_0)},
          {"iou_at_conf", optional_value(r.iou_at_conf)},
          {"threshold", r.threshold},
          {"n_pos", r.n_pos},
          {"n_neg", r.n_neg}};
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"event", "epoch"},
          {"epoch", r.epoch},
          {"loss", r.loss},
          {"l_image", r.l_image},
          {"l_patch", optional_value(r.l_patch)},
          {"alpha", r.alpha},
          {"first_batch_loss", r.first_batch_loss},
          {"train_balanced_accuracy", r.train_balanced_accuracy},
          {"val", to_json(r.val)},
          {"best", r.best}};
}

nlohmann::json to_json(const SampleRecord& r) {
  return {{"index", r.index},
          {"label", r.label},
          {"y_hat", r.y_hat},
          {"attention_mass", r.attention_mass},
          {"iou_at_0", optional_value(r.iou_at_0)},
          {"iou_at_conf", optional_value(r.iou_at_conf)},
          {"group_probability", r.group_probability},
          {"group_label", r.group_label}};
}

nlohmann::json to_json(const Evaluation& e, bool with_records) {
  nlohmann::json j = {{"image", to_json(e.image)},
                      {"group", e.group ? to_json(*e.group) : nlohmann::json(nullptr)}};
  if (with_records) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : e.records) records.push_back(to_json(r));
    j["records"] = std::move(records);
  }
  return j;
}

}  // namespace emil::cli
