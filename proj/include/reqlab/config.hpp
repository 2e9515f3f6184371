// Copyright 2026 The ReqLab Authors
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
#include <string>
#include <utility>
#include <vector>

#include "reqlab/bench.hpp"
#include "reqlab/train.hpp"

namespace reqlab {

/// Fully resolved settings of one invocation.
struct RunConfig {
    std::uint64_t seed{0};
    std::filesystem::path output_dir;   // empty: derived from the command and config
    ScenarioSpec scenario;              // simulate / eval
    int n_slots{4};                     // simulate
    ModelConfig model{ModelConfig::paper()};
    TrainConfig train{TrainConfig::paper()};
    AugmentConfig augment;
    std::vector<Category> categories;   // report; empty means every category
    ExperimentSpec bench;               // category field unused; carries the shared sweep settings
    std::filesystem::path checkpoint;   // neural estimator weights

    /// Canonical JSON of every resolved value (key order fixed).
    std::string to_json() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Every accepted "section.key".
const std::vector<std::string>& config_keys();

/// Defaults < INI text < overrides. Throws ConfigError naming the offending
/// key on unknown keys, malformed values or range violations.
RunConfig parse_config_text(const std::string& ini_text, const Overrides& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// REQLAB_OUTPUT_ROOT or "runs".
std::filesystem::path output_root();

}  // namespace reqlab
