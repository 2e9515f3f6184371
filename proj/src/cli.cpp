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

#include "reqlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "reqlab/bench.hpp"
#include "reqlab/train.hpp"

#ifndef REQLAB_VERSION
#define REQLAB_VERSION "dev"
#endif

namespace reqlab {

namespace {

const char* const kNeuralId = "requestnet";

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out)
        throw std::runtime_error("write failed: " + p.string());
}

/// Estimator ids must be classical or the network; the network needs weights.
std::map<std::string, BatchEstimator> load_models(const RunConfig& cfg)
{
    std::map<std::string, BatchEstimator> models;
    for (const auto& id : cfg.bench.estimators) {
        if (id == "ls_raw" || id == "ls_occ" || id == "genie_lmmse" || id == "truth")
            continue;
        if (id != kNeuralId)
            throw ConfigError("bench.estimators: unknown estimator '" + id +
                              "' (ls_raw, ls_occ, genie_lmmse, truth, requestnet)");
        if (cfg.checkpoint.empty())
            throw ConfigError("bench.estimators: estimator 'requestnet' needs a checkpoint (--checkpoint PATH)");
    }
    const bool neural = std::find(cfg.bench.estimators.begin(), cfg.bench.estimators.end(), kNeuralId) !=
                        cfg.bench.estimators.end();
    if (neural)
        models.emplace(kNeuralId, requestnet_batch_estimator(load_model(cfg.checkpoint)));
    return models;
}

/// Report manifest carrying the invocation next to the experiment list.
void attach_run(NmseReport& rep, const std::string& command, const RunConfig& cfg)
{
    auto m = nlohmann::ordered_json::parse(rep.manifest);
    m["command"] = command;
    m["run_id"] = run_id(command, cfg);
    m["config"] = nlohmann::ordered_json::parse(cfg.to_json());
    if (!cfg.checkpoint.empty())
        m["checkpoint_manifest_hash"] = read_checkpoint_meta(cfg.checkpoint).manifest_hash;
    rep.manifest = m.dump(2);
    rep.manifest_hash = fingerprint(rep.manifest);
}

int cmd_simulate(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out)
{
    write_simulation(cfg, dir);
    out << "simulate: " << cfg.n_slots << " slots -> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out)
{
    TrainConfig tc = cfg.train;
    tc.out_dir = dir;
    const auto dtype = tc.float64 ? torch::kFloat64 : torch::kFloat32;
    auto net = make_model(cfg.model, dtype);
    const auto every = std::max<std::int64_t>(1, tc.steps / 20);
    const auto res = train_loop(net, tc, cfg.augment, [&](const LogRow& r) {
        if (r.step % every == 0)
            out << "step " << r.step << " loss " << r.loss << " lr " << r.lr << "\n" << std::flush;
    });
    out << "train: last step " << res.last_step << ", checkpoint " << res.last_checkpoint.string() << "\n";
    if (res.diverged) {
        out << "train: loss became non-finite; last good weights saved\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out)
{
    const auto models = load_models(cfg);
    ExperimentSpec spec = cfg.bench;
    NmseReport rep;
    rep.rows = evaluate_scenario("eval", cfg.scenario, spec, models, derive_seed(cfg.seed, SeedStream::scenario));
    nlohmann::ordered_json m;
    m["kind"] = "eval";
    m["version"] = REQLAB_VERSION;
    rep.manifest = m.dump(2);
    attach_run(rep, "eval", cfg);
    emit_report(rep, dir);
    out << report_csv(rep);
    return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out)
{
    const auto models = load_models(cfg);
    const auto cats = cfg.categories.empty() ? all_categories() : cfg.categories;
    std::vector<NmseReport> parts;
    for (auto c : cats) {
        ExperimentSpec spec = cfg.bench;
        spec.category = c;
        out << "report: " << to_string(c) << "\n" << std::flush;
        parts.push_back(run_experiment(spec, models, cfg.seed));
    }
    auto rep = merge_reports(parts);
    attach_run(rep, "report", cfg);
    const auto files = emit_report(rep, dir);
    out << "report: " << rep.rows.size() << " rows, " << files.plots.size() << " plots -> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_check(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out)
{
    const auto results = check_suite(cfg.seed);
    const auto ledger = format_ledger(results);
    write_text(dir / "checks.txt", ledger);
    out << ledger;
    const bool ok = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
    return ok ? kExitOk : kExitChecksFailed;
}

}  // namespace

std::string run_id(const std::string& command, const RunConfig& cfg)
{
    return command + "-" + fingerprint(command + "\n" + cfg.to_json()).substr(0, 10);
}

std::filesystem::path run_directory(const std::string& command, const RunConfig& cfg)
{
    if (!cfg.output_dir.empty())
        return cfg.output_dir;
    return output_root() / (command == "report" ? std::string("reports") : command) / run_id(command, cfg);
}

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg)
{
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json m;
    m["command"] = command;
    m["run_id"] = run_id(command, cfg);
    m["version"] = REQLAB_VERSION;
    m["config"] = nlohmann::ordered_json::parse(cfg.to_json());
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::uint64_t simulate_slot_seed(std::uint64_t seed, int i)
{
    return derive_seed(derive_seed(seed, SeedStream::scenario), static_cast<std::uint64_t>(i));
}

void write_simulation(const RunConfig& cfg, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const auto layout = build_grid(cfg.scenario.carrier, cfg.scenario.dmrs, cfg.scenario.prg);

    std::string mask;
    for (int f = 0; f < layout.n_subcarriers(); ++f) {
        for (int t = 0; t < kSymbolsPerSlot; ++t) {
            mask += layout.mask.at(f, t) ? '1' : '0';
            mask += t + 1 < kSymbolsPerSlot ? ' ' : '\n';
        }
    }
    write_text(dir / "mask.txt", mask);

    std::string text;
    text += "# per slot: header, then 'y j f t re im' on DMRS tones and 'h j k f t re im' on every RE\n";
    for (int i = 0; i < cfg.n_slots; ++i) {
        const auto seed = simulate_slot_seed(cfg.seed, i);
        const auto o = simulate_slot(cfg.scenario, seed);
        text += "slot " + std::to_string(i) + " seed " + std::to_string(seed) + " snr_db " + num(o.snr_db) +
                " sigma " + num(o.sigma) + " amp " + num(o.amp) + "\n";
        for (int j = 0; j < o.n_rx(); ++j)
            for (int f = 0; f < layout.n_subcarriers(); ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    if (layout.mask.at(f, t)) {
                        const auto v = o.y(j, f, t);
                        text += "y " + std::to_string(j) + " " + std::to_string(f) + " " + std::to_string(t) + " " +
                                num(v.real()) + " " + num(v.imag()) + "\n";
                    }
        for (int j = 0; j < o.n_rx(); ++j)
            for (int k = 0; k < o.n_layers(); ++k)
                for (int f = 0; f < layout.n_subcarriers(); ++f)
                    for (int t = 0; t < kSymbolsPerSlot; ++t) {
                        const auto v = o.g_true(j, k, f, t);
                        text += "h " + std::to_string(j) + " " + std::to_string(k) + " " + std::to_string(f) + " " +
                                std::to_string(t) + " " + num(v.real()) + " " + num(v.imag()) + "\n";
                    }
    }
    write_text(dir / "slots.txt", text);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    at::set_num_threads(1);
    CLI::App app{"ReQuestNet channel-estimation lab"};
    app.require_subcommand(1);

    struct Flags {
        std::string config;
        std::vector<std::string> sets;
        std::string preset;
        std::string seed, out, snr, checkpoint, categories, estimators;
    } fl;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "simulate slots and export the DMRS mask"},
        {"train", "train the network"},
        {"eval", "NMSE vs SNR of the configured scenario"},
        {"check", "training-free property checks"},
        {"report", "benchmark categories with plots"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", fl.config, "INI config file");
        sub->add_option("--set", fl.sets, "section.key=value override (repeatable)");
        sub->add_option("--preset", fl.preset, "model and training preset: paper or desk");
        sub->add_option("--seed", fl.seed, "master seed");
        sub->add_option("--out", fl.out, "output directory");
        sub->add_option("--snr", fl.snr, "SNR in dB");
        sub->add_option("--checkpoint", fl.checkpoint, "network weights for the requestnet estimator");
        sub->add_option("--categories", fl.categories, "comma-separated benchmark categories");
        sub->add_option("--estimators", fl.estimators, "comma-separated estimator ids");
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        Overrides ov;
        if (!fl.preset.empty()) {
            ov.emplace_back("model.preset", fl.preset);
            ov.emplace_back("train.preset", fl.preset);
        }
        for (const auto& s : fl.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("--set expects section.key=value, got '" + s + "'");
            ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        if (!fl.seed.empty())
            ov.emplace_back("run.seed", fl.seed);
        if (!fl.out.empty())
            ov.emplace_back("run.output_dir", fl.out);
        if (!fl.snr.empty())
            ov.emplace_back("sim.snr_db", fl.snr);
        if (!fl.checkpoint.empty())
            ov.emplace_back("bench.checkpoint", fl.checkpoint);
        if (!fl.categories.empty())
            ov.emplace_back("bench.categories", fl.categories);
        if (!fl.estimators.empty())
            ov.emplace_back("bench.estimators", fl.estimators);

        const RunConfig cfg = fl.config.empty() ? parse_config_text("", ov) : parse_config(fl.config, ov);
        if (command == "eval" || command == "report")
            load_models(cfg);   // fail before any output exists

        const auto dir = run_directory(command, cfg);
        write_run_manifest(dir, command, cfg);
        if (command == "simulate")
            return cmd_simulate(cfg, dir, out);
        if (command == "train")
            return cmd_train(cfg, dir, out);
        if (command == "eval")
            return cmd_eval(cfg, dir, out);
        if (command == "report")
            return cmd_report(cfg, dir, out);
        return cmd_check(cfg, dir, out);
    } catch (const std::invalid_argument& e) {
        err << command << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << "\n";
        return kExitRuntime;
    }
}

int run_cli(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace reqlab
