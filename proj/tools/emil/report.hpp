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

#include <nlohmann/json.hpp>

#include "emil/config.hpp"
#include "emil/metrics.hpp"
#include "emil/train.hpp"

namespace emil::cli {

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const EpochRecord& r);
nlohmann::json to_json(const SampleRecord& r);
nlohmann::json to_json(const Evaluation& e, bool with_records);

}  // namespace emil::cli
