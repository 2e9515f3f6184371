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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reqlab/reqnet.hpp"

namespace reqlab {

enum class Category { add_pos, conf_type, bundling, layers, delay, doppler, mimo_corr, scs, gen_id, gen_ood };

Category parse_category(const std::string& s);
std::string to_string(Category c);
const std::vector<Category>& all_categories();

struct ExperimentSpec {
    Category category{Category::add_pos};
    std::vector<double> snr_points{0, 5, 10, 15, 20, 25, 30, 35, 40};
    int n_slots_per_point{200};
    std::vector<std::string> estimators{"ls_occ", "genie_lmmse"};
    int n_rb{16};
    PrecodingMode precoding{PrecodingMode::random};

    void validate() const;
};

/// One experiment per value of the category's swept parameter, e.g.
/// "add_pos/n_dmrs=3". Unswept fields take the base configuration.
std::vector<std::pair<std::string, ScenarioSpec>> category_scenarios(const ExperimentSpec& spec);

/// Estimates for a run of slots that share one layout.
using BatchEstimator = std::function<std::vector<EstimateGrid>(std::span<const Observation>)>;

/// Lifts a per-slot estimator.
BatchEstimator per_slot(Estimator est);

/// Batched network inference (chunks of up to `chunk` slots), no grad.
BatchEstimator requestnet_batch_estimator(ReQuestNet net, int chunk = 16);

struct NmseRow {
    std::string experiment;
    std::string estimator;
    double snr_db{0.0};
    double nmse{0.0};
    double ci_halfwidth{0.0};   // 1.96 standard errors of the per-slot NMSE
    int n_slots{0};
};

struct NmseReport {
    std::vector<NmseRow> rows;
    std::string manifest;   // JSON text
    std::string manifest_hash;
};

/// NMSE rows of one scenario over spec.snr_points and spec.estimators; slot i
/// at SNR point p uses derive_seed(seed, p * 1000000 + i).
std::vector<NmseRow> evaluate_scenario(const std::string& name, const ScenarioSpec& base, const ExperimentSpec& spec,
                                       const std::map<std::string, BatchEstimator>& models, std::uint64_t seed);

/// Classical ids ("ls_raw", "ls_occ", "genie_lmmse", "truth") resolve on
/// their own; any other id must appear in `models`. Every estimator sees the
/// same slots.
NmseReport run_experiment(const ExperimentSpec& spec, const std::map<std::string, BatchEstimator>& models,
                          std::uint64_t seed);

/// Concatenates reports of several specs; the manifest lists every spec.
NmseReport merge_reports(const std::vector<NmseReport>& parts);

struct ReportFiles {
    std::filesystem::path csv;
    std::filesystem::path summary;
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> plots;
};

/// results.csv, summary.json, manifest.json and plots/<experiment>.svg
/// ((-NMSE in dB) vs SNR, one curve per estimator) under `dir`.
ReportFiles emit_report(const NmseReport& report, const std::filesystem::path& dir);

std::string report_csv(const NmseReport& report);
std::string plot_svg(const NmseReport& report, const std::string& experiment);

// -- check suite ---------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed{false};
    double value{0.0};       // measured statistic
    double tolerance{0.0};   // bound the statistic is held to
    std::string detail;
};

using GradientFn = std::function<LikelihoodFeedback(const Observation&, const ChannelGrid&)>;

/// Worst relative error of `grad` (Re/Im partials of the Gaussian
/// log-likelihood) against central differences on `n` random 2x2, 2-RB slots.
double lm_gradient_fd_error(int n, std::uint64_t seed, const GradientFn& grad);

/// Training-free property checks with fixed seeds. `lm_sign` flips the
/// gradient under test; the gradient check must then fail.
std::vector<CheckResult> check_suite(std::uint64_t seed = 0, double lm_sign = 1.0);

/// Text ledger, one line per check.
std::string format_ledger(const std::vector<CheckResult>& results);

}  // namespace reqlab
