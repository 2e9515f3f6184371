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

#include "reqlab/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace reqlab {

namespace {

// Staging values that only become a typed struct once every key is read.
struct Staging {
    int dmrs_type{1};
    int n_dmrs{2};
    int n_layers{2};
    std::uint32_t dmrs_seed{0};
    bool model_seed_set{false};
};

using Setter = std::function<void(RunConfig&, Staging&, const std::string&, const std::string&)>;

std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long as_int(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

int as_int32(const std::string& key, const std::string& v)
{
    const long long x = as_int(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError(key + ": integer out of range");
    return static_cast<int>(x);
}

std::uint64_t as_u64(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
        if (!v.empty() && v[0] != '-')
            out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double as_double(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || !std::isfinite(out))
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool as_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> as_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (const auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

double snr_in_range(const std::string& key, const std::string& v)
{
    const double s = as_double(key, v);
    if (s < kMinSnrDb || s > kMaxSnrDb)
        throw ConfigError(key + " = " + v + " dB lies outside the simulated SNR range [0, 40] dB");
    return s;
}

template <class Fn>
Setter wrap(Fn fn)
{
    return [fn](RunConfig& c, Staging& st, const std::string& key, const std::string& v) {
        try {
            fn(c, st, key, v);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    };
}

#define SET(body) wrap([](RunConfig& c, Staging& st, const std::string& k, const std::string& v) { \
    (void)c; (void)st; (void)k; (void)v; body; })

const std::map<std::string, Setter>& registry()
{
    static const std::map<std::string, Setter> r{
        {"run.seed", SET(c.seed = as_u64(k, v))},
        {"run.output_dir", SET(c.output_dir = v)},

        {"carrier.scs_khz", SET(c.scenario.carrier.scs_khz = as_int32(k, v))},
        {"carrier.n_rb", SET(c.scenario.carrier.n_rb = as_int32(k, v))},
        {"dmrs.config_type", SET(st.dmrs_type = as_int32(k, v))},
        {"dmrs.n_dmrs", SET(st.n_dmrs = as_int32(k, v))},
        {"dmrs.n_layers", SET(st.n_layers = as_int32(k, v))},
        {"dmrs.seed", SET(st.dmrs_seed = static_cast<std::uint32_t>(as_u64(k, v)))},
        {"prg.bundle", SET(c.scenario.prg.bundle_size = v == "wideband" ? PrgConfig::kWideband : as_int32(k, v))},
        {"channel.kind", SET(c.scenario.channel.kind = parse_channel_kind(v))},
        {"channel.profile", SET(c.scenario.channel.profile = v)},
        {"channel.delay_spread_ns", SET(c.scenario.channel.delay_spread_s = as_double(k, v) * 1e-9)},
        {"channel.doppler_hz", SET(c.scenario.channel.max_doppler_hz = as_double(k, v))},
        {"channel.correlation", SET(c.scenario.channel.correlation = v)},
        {"channel.n_tx", SET(c.scenario.channel.n_tx = as_int32(k, v))},
        {"channel.n_rx", SET(c.scenario.channel.n_rx = as_int32(k, v))},
        {"channel.sinusoids", SET(c.scenario.channel.sinusoids = as_int32(k, v))},
        {"sim.precoding", SET(c.scenario.precoding = parse_precoding_mode(v))},
        {"sim.snr_db", SET(c.scenario.snr_db = snr_in_range(k, v))},
        {"sim.amp", SET(c.scenario.amp = as_double(k, v))},
        {"sim.n_slots", SET(c.n_slots = as_int32(k, v))},

        {"model.preset", SET(c.model = ModelConfig::from_preset(v))},
        {"model.t_steps", SET(c.model.t_steps = as_int32(k, v))},
        {"model.coarse_width", SET(c.model.coarse_width = as_int32(k, v))},
        {"model.rm_width", SET(c.model.rm_width = as_int32(k, v))},
        {"model.attn_heads", SET(c.model.attn_heads = as_int32(k, v))},
        {"model.max_tile_rb", SET(c.model.max_tile_rb = as_int32(k, v))},
        {"model.seed", SET(c.model.seed = as_u64(k, v); st.model_seed_set = true)},

        {"train.preset", SET(if (v == "paper") c.train = TrainConfig::paper(); else if (v == "desk") c.train = TrainConfig::desk();
                             else throw ConfigError(k + " must be paper or desk, got '" + v + "'"))},
        {"train.variant", SET(c.train.variant = parse_train_variant(v))},
        {"train.batch_slots", SET(c.train.batch_slots = as_int32(k, v))},
        {"train.steps", SET(c.train.steps = as_int(k, v))},
        {"train.lr", SET(c.train.lr = as_double(k, v))},
        {"train.plateau_factor", SET(c.train.plateau_factor = as_double(k, v))},
        {"train.plateau_patience", SET(c.train.plateau_patience = as_int32(k, v))},
        {"train.min_lr", SET(c.train.min_lr = as_double(k, v))},
        {"train.eval_every", SET(c.train.eval_every = as_int32(k, v))},
        {"train.validation_slots", SET(c.train.validation_slots = as_int32(k, v))},
        {"train.checkpoint_every", SET(c.train.checkpoint_every = as_int32(k, v))},
        {"train.float64", SET(c.train.float64 = as_bool(k, v))},
        {"train.min_rb", SET(c.train.limits.min_rb = as_int32(k, v))},
        {"train.max_rb", SET(c.train.limits.max_rb = as_int32(k, v))},
        {"train.snr_lo_db", SET(c.train.limits.snr_lo_db = snr_in_range(k, v))},
        {"train.snr_hi_db", SET(c.train.limits.snr_hi_db = snr_in_range(k, v))},
        {"train.doppler_hi_hz", SET(c.train.limits.doppler_hi_hz = as_double(k, v))},
        {"train.resume", SET(c.train.resume = v)},

        {"augment.enabled", SET(c.augment.enabled = as_bool(k, v))},
        {"augment.snr_jitter_lo_db", SET(c.augment.snr_jitter_lo_db = as_double(k, v))},
        {"augment.snr_jitter_hi_db", SET(c.augment.snr_jitter_hi_db = as_double(k, v))},
        {"augment.amp_lo", SET(c.augment.amp_lo = as_double(k, v))},
        {"augment.amp_hi", SET(c.augment.amp_hi = as_double(k, v))},

        {"bench.categories", SET(c.categories.clear(); for (const auto& x : as_list(v)) c.categories.push_back(parse_category(x)))},
        {"bench.snr_points", SET(c.bench.snr_points.clear(); for (const auto& x : as_list(v)) c.bench.snr_points.push_back(snr_in_range(k, x)))},
        {"bench.n_slots_per_point", SET(c.bench.n_slots_per_point = as_int32(k, v))},
        {"bench.estimators", SET(c.bench.estimators = as_list(v))},
        {"bench.n_rb", SET(c.bench.n_rb = as_int32(k, v))},
        {"bench.precoding", SET(c.bench.precoding = parse_precoding_mode(v))},
        {"bench.checkpoint", SET(c.checkpoint = v)},
    };
    return r;
}

#undef SET

std::vector<std::pair<std::string, std::string>> read_ini(const std::string& text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError(section + ": keys must live inside a [section]");
        for (const auto& [key, value] : body)
            out.emplace_back(section + "." + key, trim(value.data()));
    }
    return out;
}

void check_key(const std::string& key)
{
    if (!registry().count(key))
        throw ConfigError(key + ": unknown configuration key");
}

}  // namespace

const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, fn] : registry())
            k.push_back(name);
        return k;
    }();
    return keys;
}

RunConfig parse_config_text(const std::string& ini_text, const Overrides& overrides)
{
    // Later entries win: file first, then flags.
    std::map<std::string, std::string> merged;
    std::vector<std::string> order;
    auto put = [&](const std::string& k, const std::string& v) {
        check_key(k);
        if (!merged.count(k))
            order.push_back(k);
        merged[k] = v;
    };
    for (const auto& [k, v] : read_ini(ini_text))
        put(k, v);
    for (const auto& [k, v] : overrides)
        put(k, trim(v));

    RunConfig c;
    c.scenario.dmrs = DmrsConfig::with_symbols(1, 2, 2);
    Staging st;
    // Presets first so explicit keys refine them.
    for (const char* preset : {"model.preset", "train.preset"})
        if (merged.count(preset))
            registry().at(preset)(c, st, preset, merged.at(preset));
    for (const auto& k : order)
        if (k != "model.preset" && k != "train.preset")
            registry().at(k)(c, st, k, merged.at(k));

    try {
        c.scenario.dmrs = DmrsConfig::with_symbols(st.dmrs_type, st.n_dmrs, st.n_layers, st.dmrs_seed);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("dmrs: ") + e.what());
    }
    if (!st.model_seed_set)
        c.model.seed = c.seed;
    c.train.seed = c.seed;
    if (c.n_slots < 1)
        throw ConfigError("sim.n_slots must be positive");
    c.scenario.validate();
    c.model.validate();
    c.train.validate();
    c.augment.validate();
    c.bench.validate();
    return c;
}

RunConfig parse_config(const std::filesystem::path& path, const Overrides& overrides)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config file not found: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), overrides);
}

std::string RunConfig::to_json() const
{
    nlohmann::ordered_json j;
    j["run"] = {{"seed", seed}, {"output_dir", output_dir.string()}};
    const auto& s = scenario;
    j["carrier"] = {{"scs_khz", s.carrier.scs_khz}, {"n_rb", s.carrier.n_rb}};
    j["dmrs"] = {{"config_type", s.dmrs.config_type},
                 {"symbols", s.dmrs.symbol_indices},
                 {"n_layers", s.dmrs.n_layers},
                 {"seed", s.dmrs.seed}};
    j["prg"] = {{"bundle", s.prg.label()}};
    j["channel"] = {{"kind", to_string(s.channel.kind)},
                    {"profile", s.channel.profile},
                    {"delay_spread_ns", s.channel.delay_spread_s * 1e9},
                    {"doppler_hz", s.channel.max_doppler_hz},
                    {"correlation", s.channel.correlation},
                    {"n_tx", s.channel.n_tx},
                    {"n_rx", s.channel.n_rx},
                    {"sinusoids", s.channel.sinusoids}};
    j["sim"] = {{"precoding", to_string(s.precoding)}, {"snr_db", s.snr_db}, {"amp", s.amp}, {"n_slots", n_slots}};
    j["model"] = nlohmann::ordered_json::parse(model.to_json());
    j["train_augment"] = nlohmann::ordered_json::parse(train_manifest(train, augment, model)).at("train");
    j["augment"] = {{"enabled", augment.enabled},
                    {"snr_jitter_lo_db", augment.snr_jitter_lo_db},
                    {"snr_jitter_hi_db", augment.snr_jitter_hi_db},
                    {"amp_lo", augment.amp_lo},
                    {"amp_hi", augment.amp_hi}};
    std::vector<std::string> cats;
    for (auto cat : categories)
        cats.push_back(to_string(cat));
    j["bench"] = {{"categories", cats},
                  {"snr_points", bench.snr_points},
                  {"n_slots_per_point", bench.n_slots_per_point},
                  {"estimators", bench.estimators},
                  {"n_rb", bench.n_rb},
                  {"precoding", to_string(bench.precoding)},
                  {"checkpoint", checkpoint.string()}};
    return j.dump(2);
}

std::filesystem::path output_root()
{
    if (const char* e = std::getenv("REQLAB_OUTPUT_ROOT"); e && *e)
        return e;
    return "runs";
}

}  // namespace reqlab
