// Copyright 2026 the ltfe authors
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

#include <string>
#include <vector>

#include <json.hpp>

#include "ltfe/pipeline.hpp"

namespace ltfe {

/// Config <-> JSON with snake_case keys matching the TrainConfig fields.
/// Unknown keys are rejected (DomainError).
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = TrainConfig{});
TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig{});

/// Applies one "key=value" override ("schedule.gamma=1.3", "lr=0.01", ...).
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// Checkpoint: <stem>.ltfc holds the parameters as concatenated LTF1 records
/// (values, then momentum buffers); <stem>.json is the manifest with names,
/// byte offsets and the resolved config.
void save_checkpoint(const std::string& stem, const ModelState& model, const TrainConfig& cfg);
ModelState load_checkpoint(const std::string& stem, TrainConfig* cfg_out = nullptr);

void write_metrics_csv(const std::string& path, const std::vector<StepStats>& rows);
void write_benchmark_csv(const std::string& path, const std::vector<BenchCell>& cells);
/// Per (knob, arm): mean and stddev of accuracy across seeds.
void write_benchmark_summary_csv(const std::string& path, const std::vector<BenchCell>& cells);

}  // namespace ltfe
