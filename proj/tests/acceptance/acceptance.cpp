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

// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 3 8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "reqlab/bench.hpp"
#include "reqlab/cli.hpp"
#include "reqlab/train.hpp"

#ifndef REQLAB_ACCEPT_DIR
#define REQLAB_ACCEPT_DIR "acceptance_out"
#endif

using namespace reqlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed{false};
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

const fs::path& out_root()
{
    static const fs::path p = REQLAB_ACCEPT_DIR;
    return p;
}

// -- independent reference formulas ---------------------------------------------

// Gaussian log-likelihood over masked REs, written out from scratch.
double ref_log_likelihood(const ToneGrid& y, const PilotGrid& x, const DmrsMask& mask, const ChannelGrid& h,
                          double sigma)
{
    double acc = 0.0;
    for (int j = 0; j < y.n_ports(); ++j)
        for (int f = 0; f < mask.n_subcarriers; ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t) {
                if (!mask.mask[static_cast<std::size_t>(f) * kSymbolsPerSlot + t])
                    continue;
                cplx r = y(j, f, t);
                for (int k = 0; k < x.n_ports(); ++k)
                    r -= h(j, k, f, t) * x(k, f, t);
                acc -= std::norm(r) / (2.0 * sigma * sigma);
            }
    return acc;
}

// Mean over REs of the squared error summed over streams.
double ref_nmse(const ChannelGrid& est, const ChannelGrid& truth)
{
    double acc = 0.0;
    for (int j = 0; j < truth.n_rx(); ++j)
        for (int k = 0; k < truth.n_cols(); ++k)
            for (int f = 0; f < truth.n_subcarriers(); ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    acc += std::norm(est(j, k, f, t) - truth(j, k, f, t));
    return acc / (static_cast<double>(truth.n_subcarriers()) * kSymbolsPerSlot);
}

struct Stats {
    double mean{0}, var{0};
    int n{0};
    double se() const { return std::sqrt(var / n); }
};

Stats stats(const std::vector<double>& v)
{
    Stats s;
    s.n = static_cast<int>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / s.n;
    for (double x : v)
        s.var += (x - s.mean) * (x - s.mean);
    s.var /= std::max(1, s.n - 1);
    return s;
}

double db(double v) { return 10.0 * std::log10(v); }

ScenarioSpec bench_base(int n_rb)
{
    ScenarioSpec s;
    s.carrier = {30, n_rb};
    s.dmrs = DmrsConfig::with_symbols(1, 2, 2);
    s.prg = {4};
    s.channel.profile = "TDL-B100";
    s.channel.max_doppler_hz = 100.0;
    s.channel.correlation = "medium_a";
    s.channel.n_tx = 2;
    s.channel.n_rx = 2;
    return s;
}

// -- 1: likelihood gradient --------------------------------------------------------

// First two RBs of a legal layout; the occupancy pattern repeats per RB.
DmrsMask two_rb_mask(const DmrsMask& full)
{
    DmrsMask m;
    m.n_subcarriers = 2 * kSubcarriersPerRb;
    m.mask.assign(full.mask.begin(), full.mask.begin() + m.n_subcarriers * kSymbolsPerSlot);
    for (const auto& p : full.occ_pairs)
        if (p.first < m.n_subcarriers && p.second < m.n_subcarriers)
            m.occ_pairs.push_back(p);
    m.symbols = full.symbols;
    return m;
}

Outcome criterion_gradient()
{
    Rng rng(101);
    double worst = 0.0, worst_off = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const int type = uniform_int(rng, 1, 2);
        const int n_dmrs = uniform_int(rng, 2, 4);
        const auto layout = build_grid({30, kMinRb}, DmrsConfig::with_symbols(type, n_dmrs, 2, inst), {2});
        const auto mask = two_rb_mask(layout.mask);
        const int F = mask.n_subcarriers;
        const auto x_full = dmrs_symbols(layout.dmrs, layout);
        PilotGrid x(2, F);
        ToneGrid y(2, F);
        ChannelGrid h(2, 2, F);
        for (int k = 0; k < 2; ++k)
            for (int f = 0; f < F; ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    x(k, f, t) = x_full(k, f, t);
        for (int j = 0; j < 2; ++j)
            for (int f = 0; f < F; ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    if (mask.mask[static_cast<std::size_t>(f) * kSymbolsPerSlot + t])
                        y(j, f, t) = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
        for (auto& v : h.values())
            v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const double sigma = uniform(rng, 0.05, 1.0);

        const auto fb = lm_gradient(y, x, mask, h, sigma);
        double num = 0.0, den = 0.0;
        const double eps = 1e-5;
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int f = 0; f < F; ++f)
                    for (int t = 0; t < kSymbolsPerSlot; ++t) {
                        const cplx g = fb.gradient(j, k, f, t);
                        for (int part = 0; part < 2; ++part) {
                            const cplx step = part == 0 ? cplx{eps, 0} : cplx{0, eps};
                            ChannelGrid hp = h, hm = h;
                            hp(j, k, f, t) += step;
                            hm(j, k, f, t) -= step;
                            const double fd = (ref_log_likelihood(y, x, mask, hp, sigma) -
                                               ref_log_likelihood(y, x, mask, hm, sigma)) /
                                              (2 * eps);
                            const double an = part == 0 ? g.real() : g.imag();
                            num += (fd - an) * (fd - an);
                            den += fd * fd;
                            if (!mask.mask[static_cast<std::size_t>(f) * kSymbolsPerSlot + t])
                                worst_off = std::max(worst_off, std::abs(an));
                        }
                    }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return {worst <= 1e-5 && worst_off == 0.0,
            "max rel err " + fmt("%.3e", worst) + " (tol 1e-05), off-mask max " + fmt("%.1e", worst_off)};
}

// -- 2: layer permutation equivariance ------------------------------------------------

// Swaps the two layers of pilots and ground truth.
Observation swap_layers(const Observation& o)
{
    Observation p = o;
    for (int f = 0; f < o.layout.n_subcarriers(); ++f)
        for (int t = 0; t < kSymbolsPerSlot; ++t) {
            p.x(0, f, t) = o.x(1, f, t);
            p.x(1, f, t) = o.x(0, f, t);
            for (int j = 0; j < o.n_rx(); ++j) {
                p.g_true(j, 0, f, t) = o.g_true(j, 1, f, t);
                p.g_true(j, 1, f, t) = o.g_true(j, 0, f, t);
            }
        }
    return p;
}

Outcome criterion_equivariance()
{
    // Four layouts, five slots each: 20 inputs.
    std::vector<std::vector<Observation>> groups;
    const int configs[4][3] = {{1, 2, 2}, {2, 3, 4}, {1, 4, 0}, {2, 2, 2}};   // type, n_dmrs, bundle
    for (int g = 0; g < 4; ++g) {
        ScenarioSpec s = bench_base(g == 2 ? 6 : 4);
        s.dmrs = DmrsConfig::with_symbols(configs[g][0], configs[g][1], 2);
        s.prg = {configs[g][2]};
        std::vector<Observation> obs;
        for (int i = 0; i < 5; ++i) {
            s.snr_db = 8.0 * i;
            obs.push_back(simulate_slot(s, derive_seed(202, g * 10 + i)));
        }
        groups.push_back(std::move(obs));
    }
    double worst = 0.0, unpermuted = 0.0;   // the latter guards against a vacuous comparison
    torch::NoGradGuard ng;
    for (int draw = 0; draw < 20; ++draw) {
        ModelConfig mc = ModelConfig::paper();
        mc.seed = derive_seed(2020, draw);
        auto net = make_model(mc, torch::kFloat32);
        net->eval();
        for (const auto& obs : groups) {
            std::vector<Observation> perm;
            for (const auto& o : obs)
                perm.push_back(swap_layers(o));
            const auto b0 = pack_batch(obs, torch::kFloat32);
            const auto b1 = pack_batch(perm, torch::kFloat32);
            const auto r0 = net->forward(b0);
            const auto r1 = net->forward(b1);
            for (std::size_t t = 0; t < r0.h_hat.size(); ++t)
                for (int m = 0; m < b0.m; ++m) {
                    const auto e0 = unpack_estimate(r0.h_hat[t], b0, obs[0].layout, m);
                    const auto e1 = unpack_estimate(r1.h_hat[t], b1, obs[0].layout, m);
                    for (int j = 0; j < e0.n_rx(); ++j)
                        for (int f = 0; f < e0.n_subcarriers(); ++f)
                            for (int s = 0; s < kSymbolsPerSlot; ++s)
                                for (int k = 0; k < 2; ++k) {
                                    worst = std::max(worst, std::abs(e1(j, k, f, s) - e0(j, 1 - k, f, s)));
                                    unpermuted = std::max(unpermuted, std::abs(e1(j, k, f, s) - e0(j, k, f, s)));
                                }
                }
        }
    }
    return {worst <= 1e-4 && unpermuted > 1e-3, "max abs deviation " + fmt("%.3e", worst) +
                                                    " (tol 1e-04) over 20 draws x 20 inputs; layers differ by up to " +
                                                    fmt("%.3f", unpermuted)};
}

// -- 3: loss algebra ---------------------------------------------------------------

Outcome criterion_loss()
{
    double wsum = 0.0, w4 = 0.0;
    for (int T = 1; T <= 8; ++T) {
        const auto w = step_weights(T);
        double s = 0.0;
        for (double v : w)
            s += v;
        wsum = std::max(wsum, std::abs(s - 1.0));
    }
    const auto w = step_weights(4);
    for (int t = 0; t < 5; ++t)
        w4 = std::max(w4, std::abs(w[static_cast<std::size_t>(t)] - (t + 1) / 15.0));
    const double sc = std::abs(snr_scale(0.0, 1.0) - 2.0);

    double worst = 0.0;
    Rng rng(303);
    for (int b = 0; b < 10; ++b) {
        ScenarioSpec s = bench_base(uniform_int(rng, 4, 10));
        s.prg = {uniform_int(rng, 0, 1) ? 4 : 2};
        s.dmrs = DmrsConfig::with_symbols(uniform_int(rng, 1, 2), 2, uniform_int(rng, 1, 2));
        const int M = uniform_int(rng, 1, 4);
        const int T = uniform_int(rng, 1, 5);
        std::vector<Observation> obs;
        for (int m = 0; m < M; ++m) {
            s.snr_db = uniform(rng, 0, 40);
            auto o = simulate_slot(s, derive_seed(303, b * 10 + m));
            o.amp = uniform(rng, 0.2, 5.0);
            obs.push_back(o);
        }
        // Random estimates per step, placed in the network layout by packing
        // them as ground truth.
        std::vector<std::vector<ChannelGrid>> est(static_cast<std::size_t>(T + 1));
        std::vector<torch::Tensor> h_hat;
        for (int t = 0; t <= T; ++t) {
            std::vector<Observation> carrier = obs;
            for (auto& o : carrier) {
                for (auto& v : o.g_true.values())
                    v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
                est[static_cast<std::size_t>(t)].push_back(o.g_true);
            }
            const auto pb = pack_batch(carrier, torch::kFloat64);
            h_hat.push_back(pb.g_true.reshape({-1, 2, pb.height(), kSymbolsPerSlot}));
        }
        const auto batch = pack_batch(obs, torch::kFloat64);
        const double got = total_loss(h_hat, batch).item<double>();

        double acc = 0.0;
        for (int m = 0; m < M; ++m) {
            double weighted = 0.0;
            for (int t = 0; t <= T; ++t) {
                const double wt = 2.0 * (t + 1) / ((T + 1.0) * (T + 2.0));
                weighted += wt * ref_nmse(est[static_cast<std::size_t>(t)][static_cast<std::size_t>(m)],
                                          obs[static_cast<std::size_t>(m)].g_true);
            }
            const auto& o = obs[static_cast<std::size_t>(m)];
            acc += weighted / ((std::pow(10.0, o.snr_db / 10.0) + 1.0) * o.amp);
        }
        const double ref = std::log10(std::max(acc / M, 1e-12));
        worst = std::max(worst, std::abs(got - ref));
    }
    const bool ok = wsum <= 1e-12 && w4 <= 1e-12 && sc == 0.0 && worst <= 1e-10;
    return {ok, "weight sum err " + fmt("%.1e", wsum) + ", T=4 err " + fmt("%.1e", w4) + ", snr_scale err " +
                    fmt("%.1e", sc) + ", total_loss err " + fmt("%.2e", worst) + " (tol 1e-10)"};
}

// -- 4: Wiener oracle ----------------------------------------------------------------

Outcome criterion_wiener()
{
    CMatrix r(1, 1);
    r(0, 0) = 1.0;
    const double gain = wiener_gain(r, r, 1.0)(0, 0).real();
    const double mse_closed = wiener_mse(r, r, wiener_gain(r, r, 1.0));
    Rng rng(404);
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    double err = 0.0, pow = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const cplx h{nd(rng), nd(rng)};
        const cplx y = h + cplx{nd(rng), nd(rng)};
        err += std::norm(h - gain * y);
        pow += std::norm(h);
    }
    const double mc = err / pow;
    bool ok = std::abs(gain - 0.5) <= 1e-12 && std::abs(mc - 0.5) <= 0.02 && std::abs(mse_closed - 0.5) <= 1e-12;
    std::string detail = "gain " + fmt("%.6f", gain) + ", MC NMSE " + fmt("%.4f", mc) + ";";

    ScenarioSpec s = bench_base(16);
    for (double snr : {0.0, 10.0, 20.0, 30.0, 40.0}) {
        s.snr_db = snr;
        std::vector<double> gap;
        double g = 0, l = 0;
        for (int i = 0; i < 200; ++i) {
            const auto o = simulate_slot(s, derive_seed(4040 + static_cast<std::uint64_t>(snr), i));
            const double ng = ref_nmse(genie_lmmse(o).g_hat, o.g_true);
            const double nl = ref_nmse(ls_occ(o).g_hat, o.g_true);
            gap.push_back(ng - nl);
            g += ng;
            l += nl;
        }
        const auto st = stats(gap);
        const bool point = st.mean <= 1.96 * st.se();
        ok = ok && point;
        detail += " " + fmt("%.0f", snr) + "dB genie " + fmt("%.2f", db(g / 200)) + "/ls_occ " +
                  fmt("%.2f", db(l / 200)) + (point ? "" : " VIOLATION");
    }
    return {ok, detail};
}

// -- 5: multi-resolution aggregation ----------------------------------------------------

Outcome criterion_mra()
{
    ScenarioSpec s = bench_base(16);
    s.channel.correlation = "low";
    s.prg = {2};
    s.snr_db = 10.0;
    std::vector<double> rnd, wb;
    for (int i = 0; i < 500; ++i) {
        const auto seed = derive_seed(505, i);
        s.precoding = PrecodingMode::random;
        const auto a = simulate_slot(s, seed);
        s.precoding = PrecodingMode::wideband;
        const auto b = simulate_slot(s, seed);
        rnd.push_back(ref_nmse(genie_lmmse(a).g_hat, a.g_true));
        wb.push_back(ref_nmse(genie_lmmse(b).g_hat, b.g_true));
    }
    const auto sr = stats(rnd), sw = stats(wb);
    const double diff = sr.mean - sw.mean;
    const double ci = 1.96 * std::sqrt(sr.var / sr.n + sw.var / sw.n);
    return {std::abs(diff) <= ci, "per-PRG random " + fmt("%.5f", sr.mean) + " vs wideband " + fmt("%.5f", sw.mean) +
                                      ", |diff| " + fmt("%.5f", std::abs(diff)) + " <= CI " + fmt("%.5f", ci)};
}

// -- 6: shape sweep --------------------------------------------------------------------

Outcome criterion_shapes()
{
    auto net = make_model(ModelConfig::paper(), torch::kFloat32);
    int runs = 0, bad = 0;
    std::string first_bad;
    for (int bs : {2, 4})
        for (int layers : {1, 2})
            for (int type : {1, 2})
                for (int n_dmrs : {2, 3, 4})
                    for (int n_rb : {8, 17, 32}) {
                        ScenarioSpec s = bench_base(n_rb);
                        s.prg = {bs};
                        s.dmrs = DmrsConfig::with_symbols(type, n_dmrs, layers);
                        const auto o = simulate_slot(s, derive_seed(606, runs));
                        ++runs;
                        bool ok = true;
                        try {
                            const auto seq = requestnet_forward(net, o);
                            ok = seq.size() == 5;
                            for (const auto& g : seq) {
                                ok = ok && g.n_rx() == 2 && g.n_cols() == layers &&
                                     g.n_subcarriers() == n_rb * kSubcarriersPerRb;
                                for (const auto& v : g.values())
                                    ok = ok && std::isfinite(v.real()) && std::isfinite(v.imag());
                            }
                        } catch (const std::exception& e) {
                            ok = false;
                        }
                        if (!ok) {
                            ++bad;
                            if (first_bad.empty())
                                first_bad = " first failure bs=" + std::to_string(bs) + " L=" + std::to_string(layers) +
                                            " type=" + std::to_string(type) + " n_dmrs=" + std::to_string(n_dmrs) +
                                            " n_rb=" + std::to_string(n_rb);
                        }
                    }
    return {bad == 0 && runs == 72, std::to_string(runs - bad) + "/" + std::to_string(runs) + " configurations" +
                                        first_bad};
}

// -- 7: smoke training --------------------------------------------------------------------

fs::path smoke_dir() { return out_root() / "smoke_train"; }

Outcome criterion_smoke()
{
    const auto t0 = Clock::now();
    TrainConfig tc = TrainConfig::desk();
    tc.variant = TrainVariant::random;
    tc.limits.max_rb = 16;
    tc.limits.snr_lo_db = 0.0;
    tc.limits.snr_hi_db = 20.0;
    tc.steps = 2000;
    tc.out_dir = smoke_dir();
    fs::remove_all(tc.out_dir);
    auto net = make_model(ModelConfig::desk(), torch::kFloat32);
    const auto res = train_loop(net, tc, AugmentConfig{}, [](const LogRow& r) {
        if (r.step % 250 == 0)
            std::cout << "  [7] step " << r.step << " loss " << fmt("%.4f", r.loss) << "\n" << std::flush;
    });
    const double train_s = seconds_since(t0);
    if (res.diverged || res.log.size() != 2000)
        return {false, "training diverged or stopped early"};

    // Smoothed loss: trailing 100-step means at the start and end.
    const int win = 100;
    auto window = [&](std::size_t start) {
        double s = 0;
        for (std::size_t i = start; i < start + win; ++i)
            s += res.log[i].loss;
        return s / win;
    };
    const double first = window(0), last = window(res.log.size() - win);

    SamplerLimits lim = tc.limits;
    lim.snr_lo_db = lim.snr_hi_db = 20.0;
    auto est = requestnet_estimator(net);
    double a = 0, b = 0, g = 0;
    for (int i = 0; i < 100; ++i) {
        const auto s = sample_train_config(TrainVariant::random, derive_seed(0x5eed7, i), lim);
        const auto o = simulate_slot(s, derive_seed(0x5eed8, i));
        a += ref_nmse(est(o).g_hat, o.g_true);
        b += ref_nmse(ls_occ(o).g_hat, o.g_true);
        g += ref_nmse(genie_lmmse(o).g_hat, o.g_true);
    }
    const double net_db = db(a / 100), ls_db = db(b / 100), genie_db = db(g / 100);
    const double total_s = seconds_since(t0);
    const bool ok = last < first && net_db <= ls_db - 3.0 && total_s <= 3600.0;
    return {ok, "smoothed loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + "; NMSE@20dB net " +
                    fmt("%.2f", net_db) + " dB, ls_occ " + fmt("%.2f", ls_db) + " dB (gain " +
                    fmt("%.2f", ls_db - net_db) + " dB, need 3), genie " + fmt("%.2f", genie_db) +
                    " dB (reported); training " + fmt("%.0f", train_s) + " s"};
}

// -- 8: determinism --------------------------------------------------------------------------

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b, int& n_files)
{
    std::set<fs::path> names;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file())
            names.insert(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file())
            names.insert(fs::relative(e.path(), b));
    n_files = static_cast<int>(names.size());
    for (const auto& n : names)
        if (!fs::exists(a / n) || !fs::exists(b / n) || slurp(a / n) != slurp(b / n))
            return false;
    return n_files > 0;
}

Outcome criterion_determinism()
{
    const auto root = out_root() / "determinism";
    fs::remove_all(root);
    std::ostringstream sink;
    // Same command twice into the same run directory; the first output is set aside.
    const std::vector<std::string> cmd{"simulate", "--seed", "7", "--set", "sim.n_slots=3", "--out",
                                       (root / "sim").string()};
    bool ok = run_cli(cmd, sink, sink) == kExitOk;
    fs::rename(root / "sim", root / "sim_first");
    ok = run_cli(cmd, sink, sink) == kExitOk && ok;
    int n_sim = 0;
    const bool sim_same = same_tree(root / "sim_first", root / "sim", n_sim);

    ExperimentSpec spec;
    spec.category = Category::delay;
    spec.snr_points = {0, 20, 40};
    spec.n_slots_per_point = 10;
    const auto r1 = run_experiment(spec, {}, 8);
    const auto r2 = run_experiment(spec, {}, 8);
    emit_report(r1, root / "rep_a");
    emit_report(r2, root / "rep_b");
    int n_rep = 0;
    const bool rep_same = same_tree(root / "rep_a", root / "rep_b", n_rep);
    ok = ok && sim_same && rep_same;
    return {ok, "simulate: " + std::to_string(n_sim) + (sim_same ? " files identical" : " files, MISMATCH") +
                    "; run_experiment report: " + std::to_string(n_rep) +
                    (rep_same ? " files identical" : " files, MISMATCH")};
}

// -- 9: bench coverage -----------------------------------------------------------------------

Outcome criterion_bench()
{
    std::map<std::string, BatchEstimator> models;
    ExperimentSpec base;
    base.n_slots_per_point = 40;
    base.estimators = {"ls_occ", "genie_lmmse"};
    std::string net_note = "no checkpoint, classical estimators only";
    const auto ckpt = smoke_dir() / "latest.pt";
    if (fs::exists(ckpt)) {
        models.emplace("requestnet", requestnet_batch_estimator(load_model(ckpt)));
        base.estimators.push_back("requestnet");
        net_note = "requestnet from " + ckpt.filename().string();
    }
    std::vector<NmseReport> parts;
    for (auto c : all_categories()) {
        ExperimentSpec spec = base;
        spec.category = c;
        parts.push_back(run_experiment(spec, models, 9));
    }
    const auto rep = merge_reports(parts);
    const auto dir = out_root() / "bench_report";
    fs::remove_all(dir);
    const auto files = emit_report(rep, dir);

    bool ok = fs::exists(files.csv) && fs::exists(files.summary) && fs::exists(files.manifest);
    std::set<std::string> experiments, categories;
    for (const auto& r : rep.rows) {
        experiments.insert(r.experiment);
        categories.insert(r.experiment.substr(0, r.experiment.find('/')));
    }
    ok = ok && categories.size() == all_categories().size();
    ok = ok && rep.rows.size() == experiments.size() * base.snr_points.size() * base.estimators.size();
    ok = ok && files.plots.size() == experiments.size();
    for (const auto& p : files.plots) {
        const auto svg = slurp(p);
        std::size_t curves = 0, pos = 0;
        while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
            ++curves;
            ++pos;
        }
        ok = ok && curves == base.estimators.size();
    }
    return {ok, std::to_string(categories.size()) + " categories, " + std::to_string(experiments.size()) +
                    " experiments, " + std::to_string(files.plots.size()) + " plots, " +
                    std::to_string(base.estimators.size()) + " curves each; " + net_note};
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv)
{
    at::set_num_threads(1);
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::atoi(argv[i]));
    fs::create_directories(out_root());

    const std::vector<Criterion> all{
        {1, "likelihood gradient vs finite differences", 60, criterion_gradient},
        {2, "layer permutation equivariance", 300, criterion_equivariance},
        {3, "loss algebra", 60, criterion_loss},
        {4, "Wiener oracle", 600, criterion_wiener},
        {5, "per-PRG precoding vs wideband", 600, criterion_mra},
        {6, "shape sweep", 600, criterion_shapes},
        {7, "smoke training", 3600, criterion_smoke},
        {8, "determinism", 120, criterion_determinism},
        {9, "bench coverage", 1800, criterion_bench},
    };
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id))
            continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = seconds_since(t0);
        const bool in_time = s <= c.budget_s;
        const bool pass = o.passed && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                  << "; " << fmt("%.1f", s) << " s of " << fmt("%.0f", c.budget_s) << " s"
                  << (in_time ? "" : " OVER BUDGET") << "\n"
                  << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
