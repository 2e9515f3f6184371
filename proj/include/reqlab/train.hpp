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
#include <string>
#include <vector>

#include "reqlab/reqnet.hpp"

namespace reqlab {

/// w_t = 2 (t + 1) / ((T + 1)(T + 2)), t = 0..T.
std::vector<double> step_weights(int t_steps);

/// (10^(snr/10) + 1) * c
double snr_scale(double snr_db, double amp);

inline constexpr double kLossFloor = 1e-12;

/// Per-slot MSE of one estimate: squared error summed over streams and
/// Re/Im, averaged over the slot's real REs. Returns [M].
torch::Tensor per_slot_mse(const torch::Tensor& h_hat, const ModelBatch& batch);

/// log10(max(mean_m (1/s_m) sum_t w_t MSE_{t,m}, floor)).
torch::Tensor total_loss(const std::vector<torch::Tensor>& h_hat, const ModelBatch& batch);

struct AugmentConfig {
    double snr_jitter_lo_db{-5.0};
    double snr_jitter_hi_db{5.0};
    double amp_lo{0.2};
    double amp_hi{5.0};
    bool enabled{true};

    void validate() const;
};

/// Deterministic core: sigma channel times 10^(rho/20); y, g_true and the
/// noise std scaled by sqrt(c); amp multiplied by c.
Observation augment_with(const Observation& obs, double rho_db, double c);

/// Draws rho and c from the configured intervals.
Observation augment(const Observation& obs, const AugmentConfig& aug, std::uint64_t seed);

enum class TrainVariant { standard, random };

TrainVariant parse_train_variant(const std::string& s);
std::string to_string(TrainVariant v);

/// Ranges of the online configuration sampler.
struct SamplerLimits {
    int min_rb{kMinRb};
    int max_rb{kMaxRb};
    double snr_lo_db{0.0};
    double snr_hi_db{40.0};
    double doppler_hi_hz{450.0};
    double delay_spread_lo_s{1e-9};
    double delay_spread_hi_s{300e-9};

    void validate() const;
};

/// Profile names the standard variant draws from.
const std::vector<std::string>& standard_training_profiles();

/// One uniform draw over the training parameter table.
ScenarioSpec sample_train_config(TrainVariant variant, std::uint64_t seed, const SamplerLimits& limits = {});

/// Slots sharing one drawn layout; channel, SNR and precoding vary per slot.
std::vector<Observation> sample_train_batch(TrainVariant variant, std::uint64_t seed, int n_slots,
                                            const SamplerLimits& limits);

struct TrainConfig {
    std::string preset{"desk"};
    TrainVariant variant{TrainVariant::random};
    int batch_slots{4};
    std::int64_t steps{2000};
    double lr{4e-4};
    double plateau_factor{0.5};
    int plateau_patience{5};
    double min_lr{1e-6};
    int eval_every{100};
    int validation_slots{64};
    int checkpoint_every{500};
    std::uint64_t seed{0};
    bool float64{false};
    SamplerLimits limits{};
    std::filesystem::path out_dir{"runs/train"};
    std::filesystem::path resume;   // checkpoint to continue from; empty for a fresh run

    /// Paper values: batch 32, 40000 steps, full table.
    static TrainConfig paper();
    /// Single-core scale: batch 8, lr 2e-3, 2000 steps, n_rb <= 32.
    static TrainConfig desk();
    void validate() const;
};

struct LogRow {
    std::int64_t step{0};
    double loss{0.0};
    double lr{0.0};
    double wall_time_s{0.0};
};

struct TrainResult {
    std::int64_t last_step{-1};
    std::vector<LogRow> log;
    std::vector<std::pair<std::int64_t, double>> validation;   // (step, validation loss)
    std::filesystem::path last_checkpoint;
    double final_lr{0.0};
    bool diverged{false};
};

/// Plateau rule on a smoothed validation loss; lr never falls below min_lr.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, int patience, double min_lr);
    /// Feeds one validation loss, returns the (possibly reduced) lr.
    double update(double loss);
    double lr() const { return lr_; }
    std::string to_json() const;
    void from_json(const std::string& text);

private:
    double lr_, factor_, min_lr_;
    int patience_;
    double smoothed_{0.0};
    double best_{0.0};
    bool seeded_{false};
    int bad_{0};
};

/// Short fingerprint (FNV-1a, hex) of a text.
std::string fingerprint(const std::string& text);

/// JSON description of a training run (written before any step runs).
std::string train_manifest(const TrainConfig& cfg, const AugmentConfig& aug, const ModelConfig& model);

/// Adam at cfg.lr with the plateau rule; writes manifest.json, log.csv and
/// checkpoints under cfg.out_dir. `on_step` (optional) sees every logged row.
TrainResult train_loop(ReQuestNet& net, const TrainConfig& cfg, const AugmentConfig& aug,
                       const std::function<void(const LogRow&)>& on_step = {});

/// Seeded held-out validation batches.
std::vector<std::vector<Observation>> validation_batches(const TrainConfig& cfg);

/// Mean total_loss over the validation batches, no gradient.
double validation_loss(ReQuestNet& net, const std::vector<std::vector<Observation>>& batches);

}  // namespace reqlab
