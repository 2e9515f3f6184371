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

#include "reqlab/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "reqlab/train.hpp"

#ifndef REQLAB_VERSION
#define REQLAB_VERSION "dev"
#endif

namespace reqlab {

namespace {

const std::vector<std::pair<Category, std::string>>& category_names()
{
    static const std::vector<std::pair<Category, std::string>> names{
        {Category::add_pos, "add_pos"},     {Category::conf_type, "conf_type"}, {Category::bundling, "bundling"},
        {Category::layers, "layers"},       {Category::delay, "delay"},         {Category::doppler, "doppler"},
        {Category::mimo_corr, "mimo_corr"}, {Category::scs, "scs"},             {Category::gen_id, "gen_id"},
        {Category::gen_ood, "gen_ood"},
    };
    return names;
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

Category parse_category(const std::string& s)
{
    for (const auto& [c, n] : category_names())
        if (n == s)
            return c;
    throw ConfigError("bench.category: unknown category '" + s + "'");
}

std::string to_string(Category c)
{
    for (const auto& [k, n] : category_names())
        if (k == c)
            return n;
    return "?";
}

const std::vector<Category>& all_categories()
{
    static const std::vector<Category> all = [] {
        std::vector<Category> v;
        for (const auto& [c, n] : category_names())
            v.push_back(c);
        return v;
    }();
    return all;
}

void ExperimentSpec::validate() const
{
    if (snr_points.empty())
        throw ConfigError("bench.snr_points must not be empty");
    for (double s : snr_points)
        if (!(s >= kMinSnrDb && s <= kMaxSnrDb))
            throw ConfigError("bench.snr_points: " + fmt("%g", s) + " dB lies outside [0, 40] dB");
    if (n_slots_per_point < 2)
        throw ConfigError("bench.n_slots_per_point must be at least 2");
    if (estimators.empty())
        throw ConfigError("bench.estimators must not be empty");
    if (n_rb < kMinRb || n_rb > kMaxRb)
        throw ConfigError("bench.n_rb must lie in [4, 272]");
}

std::vector<std::pair<std::string, ScenarioSpec>> category_scenarios(const ExperimentSpec& spec)
{
    spec.validate();
    // Base fill: SCS 30 kHz, 2x2, Medium-A, TDL-B100, 2 DMRS symbols, type 1, BS 4, 2 layers.
    ScenarioSpec base;
    base.carrier = {30, spec.n_rb};
    base.dmrs = DmrsConfig::with_symbols(1, 2, 2);
    base.prg = {4};
    base.channel.kind = ChannelKind::tdl_standard;
    base.channel.profile = "TDL-B100";
    base.channel.max_doppler_hz = 100.0;
    base.channel.correlation = "medium_a";
    base.precoding = spec.precoding;

    std::vector<std::pair<std::string, ScenarioSpec>> out;
    const std::string cat = to_string(spec.category);
    auto add = [&](const std::string& label, ScenarioSpec s) {
        s.validate();
        out.emplace_back(cat + "/" + label, std::move(s));
    };
    switch (spec.category) {
    case Category::add_pos:
        for (int n : {2, 3, 4}) {
            ScenarioSpec s = base;
            s.dmrs = DmrsConfig::with_symbols(1, n, 2);
            s.channel.max_doppler_hz = 400.0;
            add("n_dmrs=" + std::to_string(n), s);
        }
        break;
    case Category::conf_type:
        for (int t : {1, 2}) {
            ScenarioSpec s = base;
            s.dmrs = DmrsConfig::with_symbols(t, 2, 2);
            s.channel.max_doppler_hz = 200.0;
            add("type=" + std::to_string(t), s);
        }
        break;
    case Category::bundling:
        for (int bs : {2, 4}) {
            ScenarioSpec s = base;
            s.prg = {bs};
            add("bs=" + std::to_string(bs), s);
        }
        break;
    case Category::layers:
        for (int l : {1, 2}) {
            ScenarioSpec s = base;
            s.dmrs = DmrsConfig::with_symbols(1, 2, l);
            add("layers=" + std::to_string(l), s);
        }
        break;
    case Category::delay:
        for (const char* p : {"TDL-A30", "TDL-B100", "TDL-C300"}) {
            ScenarioSpec s = base;
            s.channel.profile = p;
            add(std::string("profile=") + p, s);
        }
        break;
    case Category::doppler:
        for (int fd : {0, 30, 100, 300}) {
            ScenarioSpec s = base;
            s.channel.max_doppler_hz = fd;
            add("doppler=" + std::to_string(fd), s);
        }
        break;
    case Category::mimo_corr:
        for (const char* c : {"low", "medium_a", "medium", "high"}) {
            ScenarioSpec s = base;
            s.channel.correlation = c;
            add(std::string("corr=") + c, s);
        }
        break;
    case Category::scs:
        for (int scs : {15, 30}) {
            ScenarioSpec s = base;
            s.carrier.scs_khz = scs;
            add("scs=" + std::to_string(scs), s);
        }
        break;
    case Category::gen_id:
        for (const char* p : {"TDL-D100", "TDL-E100"}) {
            ScenarioSpec s = base;
            s.channel.profile = p;
            add(std::string("profile=") + p, s);
        }
        break;
    case Category::gen_ood: {
        const std::vector<std::pair<std::string, double>> rows{{"CDL-A", 0.0}, {"CDL-B", 0.0}, {"CDL-C", 100.0}};
        for (const auto& [p, fd] : rows) {
            ScenarioSpec s = base;
            s.channel.kind = ChannelKind::cdl;
            s.channel.profile = p + "100";
            s.channel.max_doppler_hz = fd;
            add("profile=" + p + "-like", s);
        }
        break;
    }
    }
    return out;
}

BatchEstimator per_slot(Estimator est)
{
    return [est = std::move(est)](std::span<const Observation> obs) {
        std::vector<EstimateGrid> out;
        out.reserve(obs.size());
        for (const auto& o : obs)
            out.push_back(est(o));
        return out;
    };
}

BatchEstimator requestnet_batch_estimator(ReQuestNet net, int chunk)
{
    if (chunk < 1)
        throw std::invalid_argument("requestnet_batch_estimator: chunk must be positive");
    return [net, chunk](std::span<const Observation> obs) mutable {
        torch::NoGradGuard ng;
        net->eval();
        const auto dtype = net->parameters().front().scalar_type();
        std::vector<EstimateGrid> out;
        for (std::size_t i = 0; i < obs.size(); i += static_cast<std::size_t>(chunk)) {
            const auto part = obs.subspan(i, std::min(obs.size() - i, static_cast<std::size_t>(chunk)));
            const auto b = pack_batch(part, dtype);
            const auto h = net->forward(b).h_hat.back();
            for (int m = 0; m < b.m; ++m)
                out.push_back({unpack_estimate(h, b, part[static_cast<std::size_t>(m)].layout, m), "requestnet"});
        }
        return out;
    };
}

namespace {

BatchEstimator resolve(const std::string& id, const std::map<std::string, BatchEstimator>& models)
{
    if (const auto it = models.find(id); it != models.end())
        return it->second;
    if (id == "ls_raw")
        return per_slot([](const Observation& o) { return ls_raw(o); });
    if (id == "ls_occ" || id == "genie_lmmse" || id == "truth")
        return per_slot(classical_estimator(id));
    throw std::runtime_error("estimator '" + id + "' needs a loaded checkpoint");
}

nlohmann::ordered_json spec_json(const ExperimentSpec& spec, std::uint64_t seed)
{
    return {{"category", to_string(spec.category)},
            {"snr_points", spec.snr_points},
            {"n_slots_per_point", spec.n_slots_per_point},
            {"estimators", spec.estimators},
            {"n_rb", spec.n_rb},
            {"precoding", to_string(spec.precoding)},
            {"seed", seed}};
}

}  // namespace

std::vector<NmseRow> evaluate_scenario(const std::string& name, const ScenarioSpec& base, const ExperimentSpec& spec,
                                       const std::map<std::string, BatchEstimator>& models, std::uint64_t seed)
{
    std::vector<BatchEstimator> ests;
    for (const auto& id : spec.estimators)
        ests.push_back(resolve(id, models));

    std::vector<NmseRow> rows;
    for (std::size_t p = 0; p < spec.snr_points.size(); ++p) {
        ScenarioSpec s = base;
        s.snr_db = spec.snr_points[p];
        std::vector<Observation> obs;
        obs.reserve(static_cast<std::size_t>(spec.n_slots_per_point));
        for (int i = 0; i < spec.n_slots_per_point; ++i)
            obs.push_back(simulate_slot(s, derive_seed(seed, p * 1000000 + static_cast<std::uint64_t>(i))));
        for (std::size_t k = 0; k < ests.size(); ++k) {
            const auto est = ests[k](obs);
            if (est.size() != obs.size())
                throw std::runtime_error("estimator '" + spec.estimators[k] + "' returned a wrong slot count");
            double sum = 0, sum2 = 0;
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const double v = nmse(est[i], obs[i]);
                sum += v;
                sum2 += v * v;
            }
            const double n = static_cast<double>(obs.size());
            const double mean = sum / n;
            const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1));
            rows.push_back({name, spec.estimators[k], s.snr_db, mean, 1.96 * std::sqrt(var / n),
                            spec.n_slots_per_point});
        }
    }
    return rows;
}

NmseReport run_experiment(const ExperimentSpec& spec, const std::map<std::string, BatchEstimator>& models,
                          std::uint64_t seed)
{
    spec.validate();
    const auto scenarios = category_scenarios(spec);
    for (const auto& id : spec.estimators)
        resolve(id, models);

    NmseReport rep;
    const std::uint64_t cat_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(spec.category));
    for (std::size_t e = 0; e < scenarios.size(); ++e) {
        const auto& [name, base] = scenarios[e];
        auto rows = evaluate_scenario(name, base, spec, models, derive_seed(cat_seed, e));
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    nlohmann::ordered_json m;
    m["kind"] = "bench";
    m["version"] = REQLAB_VERSION;
    m["experiments"] = nlohmann::json::array({spec_json(spec, seed)});
    rep.manifest = m.dump(2);
    rep.manifest_hash = fingerprint(rep.manifest);
    return rep;
}

NmseReport merge_reports(const std::vector<NmseReport>& parts)
{
    NmseReport out;
    nlohmann::ordered_json m;
    m["kind"] = "bench";
    m["version"] = REQLAB_VERSION;
    m["experiments"] = nlohmann::json::array();
    for (const auto& r : parts) {
        out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
        const auto j = nlohmann::ordered_json::parse(r.manifest);
        for (const auto& e : j.at("experiments"))
            m["experiments"].push_back(e);
    }
    out.manifest = m.dump(2);
    out.manifest_hash = fingerprint(out.manifest);
    return out;
}

std::string report_csv(const NmseReport& report)
{
    std::string s = "experiment,estimator,snr_db,nmse,ci_halfwidth,n_slots\n";
    for (const auto& r : report.rows) {
        s += r.experiment + "," + r.estimator + "," + fmt("%.3f", r.snr_db) + "," + fmt("%.9e", r.nmse) + "," +
             fmt("%.9e", r.ci_halfwidth) + "," + std::to_string(r.n_slots) + "\n";
    }
    return s;
}

namespace {

std::vector<std::string> experiments_of(const NmseReport& report)
{
    std::vector<std::string> out;
    for (const auto& r : report.rows)
        if (std::find(out.begin(), out.end(), r.experiment) == out.end())
            out.push_back(r.experiment);
    return out;
}

double neg_db(double v)
{
    return -10.0 * std::log10(std::max(v, 1e-12));
}

std::string file_stem(const std::string& experiment)
{
    std::string s;
    for (char c : experiment)
        s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return s;
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out)
        throw std::runtime_error("write failed: " + p.string());
}

}  // namespace

std::string plot_svg(const NmseReport& report, const std::string& experiment)
{
    std::vector<std::string> names;
    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (const auto& r : report.rows) {
        if (r.experiment != experiment)
            continue;
        if (std::find(names.begin(), names.end(), r.estimator) == names.end())
            names.push_back(r.estimator);
        x0 = std::min(x0, r.snr_db);
        x1 = std::max(x1, r.snr_db);
        y0 = std::min(y0, neg_db(r.nmse));
        y1 = std::max(y1, neg_db(r.nmse));
    }
    if (names.empty())
        throw std::invalid_argument("plot_svg: no rows for experiment " + experiment);
    if (x1 <= x0)
        x1 = x0 + 1;
    y0 = std::floor(y0 / 5) * 5;
    y1 = std::max(std::ceil(y1 / 5) * 5, y0 + 5);
    const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 60;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" font-family=\"sans-serif\" "
                    "font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt("%.1f", (L + W - R) / 2) + "\" y=\"20\" text-anchor=\"middle\">" + experiment + "</text>\n";
    s += "<rect x=\"" + fmt("%.1f", L) + "\" y=\"" + fmt("%.1f", T) + "\" width=\"" + fmt("%.1f", W - L - R) +
         "\" height=\"" + fmt("%.1f", H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double y = y0; y <= y1 + 1e-9; y += 5)
        s += "<text x=\"" + fmt("%.1f", L - 6) + "\" y=\"" + fmt("%.1f", py(y) + 4) + "\" text-anchor=\"end\">" +
             fmt("%g", y) + "</text>\n";
    std::set<double> ticks;
    for (const auto& r : report.rows)
        if (r.experiment == experiment)
            ticks.insert(r.snr_db);
    for (double x : ticks)
        s += "<text x=\"" + fmt("%.1f", px(x)) + "\" y=\"" + fmt("%.1f", H - B + 16) + "\" text-anchor=\"middle\">" +
             fmt("%g", x) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", (L + W - R) / 2) + "\" y=\"" + fmt("%.1f", H - 15) +
         "\" text-anchor=\"middle\">SNR (dB)</text>\n";
    s += "<text transform=\"translate(18," + fmt("%.1f", (T + H - B) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">-NMSE (dB)</text>\n";
    for (std::size_t k = 0; k < names.size(); ++k) {
        const char* col = colors[k % 6];
        std::string pts;
        for (const auto& r : report.rows)
            if (r.experiment == experiment && r.estimator == names[k])
                pts += fmt("%.2f", px(r.snr_db)) + "," + fmt("%.2f", py(neg_db(r.nmse))) + " ";
        if (!pts.empty())
            pts.pop_back();
        s += "<polyline fill=\"none\" stroke=\"" + std::string(col) + "\" stroke-width=\"2\" points=\"" + pts +
             "\"/>\n";
        const double ly = T + 14 + 18 * static_cast<double>(k);
        s += "<line x1=\"" + fmt("%.1f", W - R + 12) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" +
             fmt("%.1f", W - R + 32) + "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + col +
             "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fmt("%.1f", W - R + 38) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" + names[k] +
             "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

ReportFiles emit_report(const NmseReport& report, const std::filesystem::path& dir)
{
    if (report.rows.empty())
        throw std::invalid_argument("emit_report: empty report");
    std::error_code ec;
    std::filesystem::create_directories(dir / "plots", ec);
    if (ec)
        throw std::runtime_error("cannot create report directory " + dir.string() + ": " + ec.message());
    ReportFiles files{dir / "results.csv", dir / "summary.json", dir / "manifest.json", {}};
    write_file(files.manifest, report.manifest + "\n");
    write_file(files.csv, report_csv(report));

    nlohmann::ordered_json summary;
    summary["manifest_hash"] = report.manifest_hash;
    summary["experiments"] = nlohmann::ordered_json::array();
    for (const auto& e : experiments_of(report)) {
        nlohmann::ordered_json ej;
        ej["experiment"] = e;
        ej["label"] = e.find("CDL") != std::string::npos ? "CDL-like" : "";
        nlohmann::ordered_json curves = nlohmann::ordered_json::object();
        for (const auto& r : report.rows)
            if (r.experiment == e) {
                auto& c = curves[r.estimator];
                c["snr_db"].push_back(r.snr_db);
                c["nmse_db"].push_back(std::round(-neg_db(r.nmse) * 1e4) / 1e4);
            }
        ej["curves"] = curves;
        summary["experiments"].push_back(ej);
        const auto plot = dir / "plots" / (file_stem(e) + ".svg");
        write_file(plot, plot_svg(report, e));
        files.plots.push_back(plot);
    }
    write_file(files.summary, summary.dump(2) + "\n");
    return files;
}

// -- check suite -------------------------------------------------------------------

double lm_gradient_fd_error(int n, std::uint64_t seed, const GradientFn& grad)
{
    double worst = 0.0;
    Rng rng(seed);
    for (int inst = 0; inst < n; ++inst) {
        ScenarioSpec s;
        // Smallest legal carrier split into 2-RB PRGs; probes land in the first PRG.
        s.carrier = {30, kMinRb};
        s.prg = {2};
        s.dmrs = DmrsConfig::with_symbols(1, 2, 2);
        s.snr_db = uniform(rng, 0, 40);
        const auto obs = simulate_slot(s, derive_seed(seed, static_cast<std::uint64_t>(inst)));
        ChannelGrid h(2, 2, obs.layout.n_subcarriers());
        for (auto& v : h.values())
            v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const auto fb = grad(obs, h);
        const double eps = 1e-6;
        for (int probe = 0; probe < 8; ++probe) {
            const int j = uniform_int(rng, 0, 1), k = uniform_int(rng, 0, 1);
            const int f = uniform_int(rng, 0, 2 * kSubcarriersPerRb - 1);
            const int t = obs.layout.mask.symbols[static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<int>(obs.layout.mask.symbols.size()) - 1))];
            for (int part = 0; part < 2; ++part) {
                const cplx step = part == 0 ? cplx{eps, 0} : cplx{0, eps};
                ChannelGrid hp = h, hm = h;
                hp(j, k, f, t) += step;
                hm(j, k, f, t) -= step;
                const double fd = (log_likelihood(obs.y, obs.x, obs.layout.mask, hp, obs.sigma) -
                                   log_likelihood(obs.y, obs.x, obs.layout.mask, hm, obs.sigma)) /
                                  (2 * eps);
                const cplx g = fb.gradient(j, k, f, t);
                const double an = part == 0 ? g.real() : g.imag();
                const double scale = std::max({std::abs(an), std::abs(fd), 1e-300});
                if (obs.layout.mask.at(f, t))
                    worst = std::max(worst, std::abs(fd - an) / scale);
            }
        }
    }
    return worst;
}

namespace {

CheckResult bounded(std::string name, double value, double tol, std::string detail = {})
{
    return {std::move(name), value <= tol, value, tol, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> check_suite(std::uint64_t seed, double lm_sign)
{
    std::vector<CheckResult> out;

    // Likelihood gradient against central differences.
    const GradientFn grad = [lm_sign](const Observation& o, const ChannelGrid& h) {
        auto fb = lm_gradient(o, h);
        for (auto& v : fb.delta_y.values())
            v *= lm_sign;
        return fb;
    };
    out.push_back(bounded("lm_gradient_fd", lm_gradient_fd_error(5, derive_seed(seed, 1), grad), 1e-5));

    // Loss weights.
    double wsum = 0;
    for (int t = 1; t <= 8; ++t) {
        double s = 0;
        for (double v : step_weights(t))
            s += v;
        wsum = std::max(wsum, std::abs(s - 1.0));
    }
    out.push_back(bounded("step_weights_sum", wsum, 1e-12));
    double w4 = 0;
    const auto w = step_weights(4);
    for (int i = 0; i < 5; ++i)
        w4 = std::max(w4, std::abs(w[static_cast<std::size_t>(i)] - (i + 1) / 15.0));
    out.push_back(bounded("step_weights_t4", w4, 1e-12));
    out.push_back(bounded("snr_scale_0db", std::abs(snr_scale(0.0, 1.0) - 2.0), 0.0));

    // Scalar Wiener toy: one pilot, prior variance 1, noise variance 1.
    {
        CMatrix r(1, 1);
        r(0, 0) = 1.0;
        const CMatrix g = wiener_gain(r, r, 1.0);
        out.push_back(bounded("wiener_scalar_gain", std::abs(g(0, 0) - 0.5), 1e-12));
        Rng rng(derive_seed(seed, 2));
        std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
        double acc = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const cplx h{nd(rng), nd(rng)};
            const cplx z = h + cplx{nd(rng), nd(rng)};
            acc += std::norm(g(0, 0) * z - h);
        }
        out.push_back(bounded("wiener_scalar_nmse", std::abs(acc / n - 0.5), 0.02));
    }

    // Genie LMMSE against ls_occ, paired over slots at 10 dB.
    {
        ScenarioSpec s;
        s.carrier = {30, 8};
        s.snr_db = 10.0;
        double diff = 0;
        const int n = 20;
        for (int i = 0; i < n; ++i) {
            const auto o = simulate_slot(s, derive_seed(seed, 300 + static_cast<std::uint64_t>(i)));
            diff += nmse(genie_lmmse(o), o) - nmse(ls_occ(o), o);
        }
        out.push_back(bounded("genie_not_worse_than_ls_occ", std::max(0.0, diff / n), 0.0,
                              "mean paired NMSE gap " + fmt("%.4g", diff / n)));
    }

    // Precoded channel identity across two PRGs sharing one channel.
    {
        double err = 0;
        for (std::uint64_t i = 0; i < 5; ++i) {
            const auto m = mra_scenario(derive_seed(seed, 400 + i));
            err = std::max(err, (m.h * m.w2 - m.h * m.w1 * m.relative).norm());
        }
        out.push_back(bounded("mra_relative_transform", err, 1e-10));
    }

    // Layer permutation equivariance of the untrained desk network.
    {
        ModelConfig mc = ModelConfig::desk();
        mc.seed = seed;
        auto net = make_model(mc);
        {
            torch::NoGradGuard ng;
            torch::manual_seed(derive_seed(seed, 500));
            for (auto& p : net->parameters())
                p.add_(torch::randn_like(p) * 0.02);
        }
        ScenarioSpec s;
        s.carrier = {30, 8};
        double worst = 0;
        for (std::uint64_t i = 0; i < 3; ++i) {
            const auto o = simulate_slot(s, derive_seed(seed, 600 + i));
            const std::vector<int> perm{1, 0};
            Observation p = o;
            p.x = permute_layers(o.x, perm);
            const auto a = requestnet_forward(net, o).back();
            const auto b = requestnet_forward(net, p).back();
            for (int j = 0; j < a.n_rx(); ++j)
                for (int k = 0; k < 2; ++k)
                    for (int f = 0; f < a.n_subcarriers(); ++f)
                        for (int t = 0; t < kSymbolsPerSlot; ++t)
                            worst = std::max(worst, std::abs(b(j, k, f, t) - a(j, perm[static_cast<std::size_t>(k)], f, t)));
        }
        out.push_back(bounded("layer_equivariance_fp32", worst, 1e-4));

        // One parameter set across layouts.
        int failures = 0;
        for (int bs : {2, 4})
            for (int layers : {1, 2})
                for (int type : {1, 2})
                    for (int n_rb : {8, 17}) {
                        ScenarioSpec v;
                        v.carrier = {30, n_rb};
                        v.prg = {bs};
                        v.dmrs = DmrsConfig::with_symbols(type, 3, layers);
                        const auto o = simulate_slot(v, derive_seed(seed, 700));
                        const auto est = requestnet_forward(net, o);
                        bool ok = est.size() == static_cast<std::size_t>(mc.t_steps + 1);
                        for (const auto& e : est) {
                            ok = ok && e.same_shape(o.g_true);
                            for (const auto& x : e.values())
                                ok = ok && std::isfinite(x.real()) && std::isfinite(x.imag());
                        }
                        failures += ok ? 0 : 1;
                    }
        out.push_back(bounded("shape_sweep_failures", failures, 0.0));
    }

    // Determinism of the slot generator.
    {
        ScenarioSpec s;
        s.carrier = {30, 8};
        s.channel.kind = ChannelKind::tdl_random;
        s.channel.profile = "random";
        const bool same = simulate_slot(s, seed + 9) == simulate_slot(s, seed + 9);
        out.push_back({"simulate_deterministic", same, same ? 0.0 : 1.0, 0.0, {}});
    }
    return out;
}

std::string format_ledger(const std::vector<CheckResult>& results)
{
    std::string s;
    for (const auto& r : results) {
        s += std::string(r.passed ? "PASS " : "FAIL ") + r.name + " value=" + fmt("%.3e", r.value) +
             " tol=" + fmt("%.1e", r.tolerance);
        if (!r.detail.empty())
            s += " (" + r.detail + ")";
        s += "\n";
    }
    return s;
}

}  // namespace reqlab
