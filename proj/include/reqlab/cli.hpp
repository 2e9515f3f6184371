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

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "reqlab/config.hpp"

namespace reqlab {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitChecksFailed = 3 };

/// Stable run directory name: command plus a fingerprint of the resolved config.
std::string run_id(const std::string& command, const RunConfig& cfg);

/// Resolved output directory of a command (cfg.output_dir when set).
std::filesystem::path run_directory(const std::string& command, const RunConfig& cfg);

/// Writes manifest.json (command, run id, resolved config) into `dir`.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg);

/// Seed of simulated slot i.
std::uint64_t simulate_slot_seed(std::uint64_t seed, int i);

/// mask.txt and slots.txt for cfg.n_slots slots of cfg.scenario.
void write_simulation(const RunConfig& cfg, const std::filesystem::path& dir);

/// Full command line: simulate / train / eval / check / report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace reqlab
