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

#include "reqlab/train.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#ifndef REQLAB_VERSION
#define REQLAB_VERSION "dev"
#endif

namespace reqlab {

std::vector<double> step_weights(int t_steps)
{
    if (t_steps < 0)
        throw std::invalid_argument("step_weights: t_steps must be non-negative");
    const double denom = static_cast<double>(t_steps + 1) * (t_steps + 2);
    std::vector<double> w;
    for (int t = 0; t <= t_steps; ++t)
        w.push_back(2.0 * (t + 1) / denom);
    return w;
}

double snr_scale(double snr_db, double amp)
{
    return (std::pow(10.0, snr_db / 10.0) + 1.0) * amp;
}

torch::Tensor per_slot_mse(const torch::Tensor& h_hat, const ModelBatch& b)
{
    const auto g = b.g_true.reshape({-1, 2, b.height(), kSymbolsPerSlot});
    const auto err = (h_hat - g).pow(2).reshape({b.m, -1}).sum(1);
    return err / static_cast<double>(b.n_re());
}

torch::Tensor total_loss(const std::vector<torch::Tensor>& h_hat, const ModelBatch& b)
{
    if (h_hat.empty())
        throw std::invalid_argument("total_loss: empty estimate sequence");
    const auto w = step_weights(static_cast<int>(h_hat.size()) - 1);
    torch::Tensor acc;
    for (std::size_t t = 0; t < h_hat.size(); ++t) {
        const auto term = w[t] * per_slot_mse(h_hat[t], b);
        acc = acc.defined() ? acc + term : term;
    }
    const auto s = ((torch::pow(10.0, b.snr_db / 10.0) + 1.0) * b.amp).to(acc.scalar_type());
    return torch::log10(torch::clamp_min((acc / s).mean(), kLossFloor));
}

// -- augmentation ------------------------------------------------------------------

void AugmentConfig::validate() const
{
    if (!(snr_jitter_lo_db <= snr_jitter_hi_db))
        throw ConfigError("augment.snr_jitter interval is empty");
    if (!(amp_lo > 0 && amp_lo <= amp_hi))
        throw ConfigError("augment.amp interval must be positive and nonempty");
}

Observation augment_with(const Observation& obs, double rho_db, double c)
{
    if (!(c > 0))
        throw std::invalid_argument("augment: c must be positive");
    Observation out = obs;
    const double g = std::sqrt(c);
    out.sigma_reported = obs.sigma_reported * std::pow(10.0, rho_db / 20.0);
    out.sigma = obs.sigma * g;
    out.amp = obs.amp * c;
    for (auto& v : out.y.values())
        v *= g;
    for (auto& v : out.g_true.values())
        v *= g;
    return out;
}

Observation augment(const Observation& obs, const AugmentConfig& aug, std::uint64_t seed)
{
    if (!aug.enabled)
        return obs;
    Rng rng(derive_seed(seed, SeedStream::augment));
    const double rho = uniform(rng, aug.snr_jitter_lo_db, aug.snr_jitter_hi_db);
    const double c = uniform(rng, aug.amp_lo, aug.amp_hi);
    return augment_with(obs, rho, c);
}

// -- configuration sampler -----------------------------------------------------------

TrainVariant parse_train_variant(const std::string& s)
{
    if (s == "standard")
        return TrainVariant::standard;
    if (s == "random")
        return TrainVariant::random;
    throw ConfigError("train.variant must be standard or random, got '" + s + "'");
}

std::string to_string(TrainVariant v)
{
    return v == TrainVariant::standard ? "standard" : "random";
}

void SamplerLimits::validate() const
{
    if (min_rb < kMinRb || max_rb > kMaxRb || min_rb > max_rb)
        throw ConfigError("train.max_rb must lie in [4, 272]");
    if (snr_lo_db < kMinSnrDb || snr_hi_db > kMaxSnrDb || snr_lo_db > snr_hi_db)
        throw ConfigError("train.snr range must lie in [0, 40] dB");
    if (doppler_hi_hz < 0 || doppler_hi_hz > 450)
        throw ConfigError("train.doppler_hi_hz must lie in [0, 450]");
    if (delay_spread_lo_s < 1e-9 || delay_spread_hi_s > 300e-9 || delay_spread_lo_s > delay_spread_hi_s)
        throw ConfigError("train.delay_spread range must lie in [1, 300] ns");
}

const std::vector<std::string>& standard_training_profiles()
{
    static const std::vector<std::string> names{"TDLA", "TDLB", "TDLC", "TDL-A30", "TDL-B100", "TDL-C300"};
    return names;
}

namespace {

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v)
{
    return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))];
}

}  // namespace

ScenarioSpec sample_train_config(TrainVariant variant, std::uint64_t seed, const SamplerLimits& limits)
{
    limits.validate();
    Rng rng(derive_seed(seed, SeedStream::scenario));
    ScenarioSpec s;
    s.carrier.scs_khz = pick(rng, std::vector<int>{15, 30});
    s.carrier.n_rb = uniform_int(rng, limits.min_rb, limits.max_rb);
    const int add_pos = uniform_int(rng, 1, 3);
    const int type = uniform_int(rng, 1, 2);
    const int layers = uniform_int(rng, 1, 2);
    s.dmrs = DmrsConfig::with_symbols(type, add_pos + 1, layers, static_cast<std::uint32_t>(rng() & 0xffffu));
    s.prg.bundle_size = pick(rng, std::vector<int>{2, 4});
    s.channel.n_tx = 2;
    s.channel.n_rx = 2;
    s.channel.max_doppler_hz = uniform(rng, 0.0, limits.doppler_hi_hz);
    s.channel.delay_spread_s = uniform(rng, limits.delay_spread_lo_s, limits.delay_spread_hi_s);
    s.channel.correlation = pick(rng, std::vector<std::string>{"low", "medium", "medium_a", "high"});
    if (variant == TrainVariant::standard) {
        s.channel.kind = ChannelKind::tdl_standard;
        s.channel.profile = pick(rng, standard_training_profiles());
    } else {
        s.channel.kind = ChannelKind::tdl_random;
        s.channel.profile = "random";
    }
    s.precoding = pick(rng, std::vector<PrecodingMode>{PrecodingMode::svd, PrecodingMode::random, PrecodingMode::wideband});
    s.snr_db = uniform(rng, limits.snr_lo_db, limits.snr_hi_db);
    s.amp = 1.0;
    s.validate();
    return s;
}

std::vector<Observation> sample_train_batch(TrainVariant variant, std::uint64_t seed, int n_slots,
                                            const SamplerLimits& limits)
{
    const ScenarioSpec layout = sample_train_config(variant, seed, limits);
    std::vector<Observation> out;
    for (int i = 0; i < n_slots; ++i) {
        const std::uint64_t slot_seed = derive_seed(seed, static_cast<std::uint64_t>(1000 + i));
        ScenarioSpec s = sample_train_config(variant, slot_seed, limits);
        s.carrier = layout.carrier;
        s.dmrs = layout.dmrs;
        s.prg = layout.prg;
        out.push_back(simulate_slot(s, slot_seed));
    }
    return out;
}

// -- configs -----------------------------------------------------------------------

TrainConfig TrainConfig::paper()
{
    TrainConfig c;
    c.preset = "paper";
    c.batch_slots = 32;
    c.steps = 40000;
    c.eval_every = 500;
    c.checkpoint_every = 2000;
    return c;
}

TrainConfig TrainConfig::desk()
{
    TrainConfig c;
    c.preset = "desk";
    c.batch_slots = 8;
    c.lr = 2e-3;
    c.limits.max_rb = 32;
    return c;
}

void TrainConfig::validate() const
{
    if (batch_slots < 1)
        throw ConfigError("train.batch_slots must be positive");
    if (steps < 1)
        throw ConfigError("train.steps must be positive");
    if (!(lr > 0))
        throw ConfigError("train.lr must be positive");
    if (!(plateau_factor > 0 && plateau_factor < 1))
        throw ConfigError("train.plateau_factor must lie in (0, 1)");
    if (plateau_patience < 1)
        throw ConfigError("train.plateau_patience must be positive");
    if (!(min_lr > 0 && min_lr <= lr))
        throw ConfigError("train.min_lr must lie in (0, lr]");
    if (eval_every < 1 || checkpoint_every < 1)
        throw ConfigError("train.eval_every and train.checkpoint_every must be positive");
    if (validation_slots < 1)
        throw ConfigError("train.validation_slots must be positive");
    limits.validate();
}

// -- scheduler ---------------------------------------------------------------------

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double min_lr)
    : lr_(lr), factor_(factor), min_lr_(min_lr), patience_(patience)
{
}

double PlateauScheduler::update(double loss)
{
    // Exponential smoothing with weight 1/2 on the newest evaluation.
    smoothed_ = seeded_ ? 0.5 * smoothed_ + 0.5 * loss : loss;
    if (!seeded_ || smoothed_ < best_) {
        best_ = smoothed_;
        bad_ = 0;
    } else if (++bad_ >= patience_) {
        lr_ = std::max(min_lr_, lr_ * factor_);
        bad_ = 0;
    }
    seeded_ = true;
    return lr_;
}

std::string PlateauScheduler::to_json() const
{
    return nlohmann::json{{"lr", lr_}, {"smoothed", smoothed_}, {"best", best_}, {"seeded", seeded_}, {"bad", bad_}}.dump();
}

void PlateauScheduler::from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    lr_ = j.at("lr").get<double>();
    smoothed_ = j.at("smoothed").get<double>();
    best_ = j.at("best").get<double>();
    seeded_ = j.at("seeded").get<bool>();
    bad_ = j.at("bad").get<int>();
}

// -- loop --------------------------------------------------------------------------

std::string fingerprint(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string train_manifest(const TrainConfig& cfg, const AugmentConfig& aug, const ModelConfig& model)
{
    nlohmann::ordered_json j;
    j["kind"] = "train";
    j["version"] = REQLAB_VERSION;
    j["model"] = nlohmann::json::parse(model.to_json());
    j["train"] = {{"preset", cfg.preset},
                  {"variant", to_string(cfg.variant)},
                  {"batch_slots", cfg.batch_slots},
                  {"steps", cfg.steps},
                  {"lr", cfg.lr},
                  {"plateau_factor", cfg.plateau_factor},
                  {"plateau_patience", cfg.plateau_patience},
                  {"min_lr", cfg.min_lr},
                  {"eval_every", cfg.eval_every},
                  {"validation_slots", cfg.validation_slots},
                  {"checkpoint_every", cfg.checkpoint_every},
                  {"seed", cfg.seed},
                  {"float64", cfg.float64},
                  {"min_rb", cfg.limits.min_rb},
                  {"max_rb", cfg.limits.max_rb},
                  {"snr_lo_db", cfg.limits.snr_lo_db},
                  {"snr_hi_db", cfg.limits.snr_hi_db},
                  {"doppler_hi_hz", cfg.limits.doppler_hi_hz},
                  {"delay_spread_lo_ns", cfg.limits.delay_spread_lo_s * 1e9},
                  {"delay_spread_hi_ns", cfg.limits.delay_spread_hi_s * 1e9}};
    j["augment"] = {{"enabled", aug.enabled},
                    {"snr_jitter_db", {aug.snr_jitter_lo_db, aug.snr_jitter_hi_db}},
                    {"amp", {aug.amp_lo, aug.amp_hi}}};
    return j.dump(2);
}

std::vector<std::vector<Observation>> validation_batches(const TrainConfig& cfg)
{
    std::vector<std::vector<Observation>> out;
    const std::uint64_t base = derive_seed(cfg.seed, SeedStream::validation);
    int left = cfg.validation_slots;
    for (std::uint64_t i = 0; left > 0; ++i) {
        const int n = std::min(left, cfg.batch_slots);
        out.push_back(sample_train_batch(cfg.variant, derive_seed(base, i), n, cfg.limits));
        left -= n;
    }
    return out;
}

double validation_loss(ReQuestNet& net, const std::vector<std::vector<Observation>>& batches)
{
    torch::NoGradGuard ng;
    const bool was_training = net->is_training();
    net->eval();
    const auto dtype = net->parameters().front().scalar_type();
    double acc = 0.0;
    for (const auto& b : batches) {
        const auto mb = pack_batch(b, dtype);
        acc += total_loss(net->forward(mb).h_hat, mb).item<double>();
    }
    net->train(was_training);
    return acc / static_cast<double>(batches.size());
}

namespace {

void set_lr(torch::optim::Adam& opt, double lr)
{
    for (auto& g : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot write " + tmp);
        out << text;
    }
    std::filesystem::rename(tmp, path);
}

std::string checkpoint_name(std::int64_t step)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%07lld.pt", static_cast<long long>(step));
    return buf;
}

}  // namespace

TrainResult train_loop(ReQuestNet& net, const TrainConfig& cfg, const AugmentConfig& aug,
                       const std::function<void(const LogRow&)>& on_step)
{
    cfg.validate();
    aug.validate();
    const auto dtype = cfg.float64 ? torch::kFloat64 : torch::kFloat32;
    net->to(dtype);
    net->train();
    std::filesystem::create_directories(cfg.out_dir);

    const std::string manifest = train_manifest(cfg, aug, net->config());
    const std::string manifest_hash = fingerprint(manifest);
    write_text_atomic(cfg.out_dir / "manifest.json", manifest + "\n");

    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    PlateauScheduler sched(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    std::int64_t start = 0;
    if (!cfg.resume.empty()) {
        const auto meta = load_checkpoint(cfg.resume, net, &opt);
        if (!(meta.model == net->config()))
            throw std::runtime_error("resume checkpoint was written for a different model config");
        sched.from_json(meta.extra_json);
        set_lr(opt, sched.lr());
        start = meta.step + 1;
    }

    const auto log_path = cfg.out_dir / "log.csv";
    const bool fresh_log = !std::filesystem::exists(log_path) || cfg.resume.empty();
    std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (fresh_log)
        log << "step,loss,lr,wall_time\n";
    log << std::setprecision(10);

    const auto val = validation_batches(cfg);
    const std::uint64_t batch_base = derive_seed(cfg.seed, SeedStream::batch);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    res.final_lr = sched.lr();

    auto save = [&](std::int64_t step, const std::string& name) {
        CheckpointMeta meta{net->config(), step, manifest_hash, sched.to_json()};
        const auto path = cfg.out_dir / name;
        save_checkpoint(path, net, meta, &opt);
        save_checkpoint(cfg.out_dir / "latest.pt", net, meta, &opt);
        res.last_checkpoint = path;
    };

    for (std::int64_t step = start; step < cfg.steps; ++step) {
        const std::uint64_t seed = derive_seed(batch_base, static_cast<std::uint64_t>(step));
        auto slots = sample_train_batch(cfg.variant, seed, cfg.batch_slots, cfg.limits);
        for (std::size_t i = 0; i < slots.size(); ++i)
            slots[i] = augment(slots[i], aug, derive_seed(seed, static_cast<std::uint64_t>(i)));
        const auto batch = pack_batch(slots, dtype);
        const auto loss = total_loss(net->forward(batch).h_hat, batch);
        const double lv = loss.item<double>();
        if (!std::isfinite(lv)) {
            std::cerr << "train: non-finite loss at step " << step << " (n_rb " << slots.front().layout.carrier.n_rb
                      << ", layers " << slots.front().n_layers() << "); halting\n";
            save(step - 1, "last_good.pt");
            res.diverged = true;
            break;
        }
        opt.zero_grad();
        loss.backward();
        opt.step();

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const LogRow row{step, lv, sched.lr(), wall};
        res.log.push_back(row);
        log << row.step << ',' << row.loss << ',' << row.lr << ',' << row.wall_time_s << '\n';
        if (on_step)
            on_step(row);
        res.last_step = step;

        if ((step + 1) % cfg.eval_every == 0) {
            const double v = validation_loss(net, val);
            res.validation.emplace_back(step, v);
            set_lr(opt, sched.update(v));
        }
        if ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.steps)
            save(step, checkpoint_name(step));
    }
    log.flush();
    res.final_lr = sched.lr();
    return res;
}

}  // namespace reqlab
