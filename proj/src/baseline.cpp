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

#include "reqlab/baseline.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace reqlab {

namespace {

constexpr double kRidge = 1e-12;
std::atomic<std::size_t> g_ridge_repairs{0};

EstimateGrid empty_estimate(const Observation& obs, std::string id)
{
    return {ChannelGrid(obs.n_rx(), obs.n_layers(), obs.layout.n_subcarriers()), std::move(id)};
}

struct PairObservation {
    int first{0};
    int second{0};   // equals `first` for the single-tone fallback
    int symbol{0};
};

std::vector<PairObservation> pairs_in_span(const Observation& obs, const PrgSpan& span)
{
    const int f0 = span.start_rb * kSubcarriersPerRb;
    const int f1 = f0 + span.n_rb * kSubcarriersPerRb;
    std::vector<PairObservation> out;
    for (int t : obs.layout.mask.symbols)
        for (const auto& p : obs.layout.mask.occ_pairs) {
            if (p.first < f0 || p.first >= f1 || !obs.layout.mask.at(p.first, t))
                continue;
            const bool partner = p.second < f1 && obs.layout.mask.at(p.second, t);
            out.push_back({p.first, partner ? p.second : p.first, t});
        }
    return out;
}

// OCC-despread pilot value of stream (j, k) for one pair.
cplx despread(const Observation& obs, const PairObservation& p, int j, int k)
{
    if (p.first == p.second)
        return obs.y(j, p.first, p.symbol) * std::conj(obs.x(k, p.first, p.symbol));
    return 0.5 * (obs.y(j, p.first, p.symbol) * std::conj(obs.x(k, p.first, p.symbol)) +
                  obs.y(j, p.second, p.symbol) * std::conj(obs.x(k, p.second, p.symbol)));
}

}  // namespace

EstimateGrid ls_raw(const Observation& obs)
{
    EstimateGrid est = empty_estimate(obs, "ls_raw");
    const int n_sc = obs.layout.n_subcarriers();
    for (int j = 0; j < obs.n_rx(); ++j)
        for (int k = 0; k < obs.n_layers(); ++k)
            for (int f = 0; f < n_sc; ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    if (obs.layout.mask.at(f, t))
                        est.g_hat(j, k, f, t) = obs.y(j, f, t) * std::conj(obs.x(k, f, t));
    return est;
}

EstimateGrid ls_occ(const Observation& obs)
{
    EstimateGrid est = empty_estimate(obs, "ls_occ");
    const auto& symbols = obs.layout.mask.symbols;
    const int n_dmrs = static_cast<int>(symbols.size());

    for (const auto& span : obs.layout.spans) {
        const int f0 = span.start_rb * kSubcarriersPerRb;
        const int f1 = f0 + span.n_rb * kSubcarriersPerRb;
        const auto pairs = pairs_in_span(obs, span);

        // Pilot subcarriers of this PRG (identical on every DMRS symbol).
        std::vector<int> pilot_sc;
        for (const auto& p : pairs)
            if (p.symbol == symbols.front()) {
                pilot_sc.push_back(p.first);
                if (p.second != p.first)
                    pilot_sc.push_back(p.second);
            }
        std::sort(pilot_sc.begin(), pilot_sc.end());
        std::vector<int> nearest(static_cast<std::size_t>(f1 - f0));
        for (int f = f0; f < f1; ++f) {
            int best = pilot_sc.front();
            for (int p : pilot_sc)
                if (std::abs(p - f) < std::abs(best - f))
                    best = p;
            nearest[static_cast<std::size_t>(f - f0)] = best;
        }

        for (int j = 0; j < obs.n_rx(); ++j)
            for (int k = 0; k < obs.n_layers(); ++k) {
                // Despread values land on both tones of their pair.
                std::vector<cplx> at_pilot(static_cast<std::size_t>((f1 - f0) * kSymbolsPerSlot));
                auto cell = [&](int f, int t) -> cplx& {
                    return at_pilot[static_cast<std::size_t>((f - f0) * kSymbolsPerSlot + t)];
                };
                for (const auto& p : pairs) {
                    const cplx v = despread(obs, p, j, k);
                    cell(p.first, p.symbol) = v;
                    cell(p.second, p.symbol) = v;
                }
                for (int f = f0; f < f1; ++f) {
                    const int src = nearest[static_cast<std::size_t>(f - f0)];
                    for (int t = 0; t < kSymbolsPerSlot; ++t) {
                        cplx v;
                        if (t <= symbols.front()) {
                            v = cell(src, symbols.front());
                        } else if (t >= symbols.back()) {
                            v = cell(src, symbols.back());
                        } else {
                            int i = 0;
                            while (i + 1 < n_dmrs && symbols[static_cast<std::size_t>(i + 1)] < t)
                                ++i;
                            const int ta = symbols[static_cast<std::size_t>(i)];
                            const int tb = symbols[static_cast<std::size_t>(i + 1)];
                            const double w = static_cast<double>(t - ta) / (tb - ta);
                            v = (1.0 - w) * cell(src, ta) + w * cell(src, tb);
                        }
                        est.g_hat(j, k, f, t) = v;
                    }
                }
            }
    }
    return est;
}

TfCorrelation::TfCorrelation(const ChannelGenie& genie, int n_subcarriers)
    : n_subcarriers_(n_subcarriers), freq_(static_cast<std::size_t>(2 * n_subcarriers + 1)),
      time_(2 * kSymbolsPerSlot + 1)
{
    const double two_pi = 2.0 * std::numbers::pi;
    for (int d = -n_subcarriers; d <= n_subcarriers; ++d) {
        cplx acc{};
        for (const auto& tap : genie.taps) {
            const double ph = -two_pi * d * genie.subcarrier_spacing_hz * tap.delay_s;
            acc += tap.power * cplx{std::cos(ph), std::sin(ph)};
        }
        freq_[static_cast<std::size_t>(d + n_subcarriers)] = acc;
    }
    for (int d = -kSymbolsPerSlot; d <= kSymbolsPerSlot; ++d) {
        const double x = two_pi * genie.max_doppler_hz * std::abs(d) * genie.symbol_duration_s;
        time_[static_cast<std::size_t>(d + kSymbolsPerSlot)] = std::cyl_bessel_j(0.0, x);
    }
}

std::size_t wiener_ridge_repairs() { return g_ridge_repairs.load(); }

CMatrix wiener_gain(const CMatrix& r_dz, const CMatrix& r_zz, double noise_var)
{
    if (r_zz.rows() != r_zz.cols() || r_dz.cols() != r_zz.rows())
        throw std::invalid_argument("wiener_gain: covariance shapes disagree");
    const Eigen::Index n = r_zz.rows();
    double ridge = kRidge;
    for (int attempt = 0; attempt < 8; ++attempt, ridge *= 1e3) {
        CMatrix a = r_zz;
        a.diagonal().array() += noise_var + ridge;
        Eigen::LLT<CMatrix> llt(a);
        if (llt.info() == Eigen::Success) {
            if (attempt > 0) {
                ++g_ridge_repairs;
                std::clog << "genie_lmmse: covariance repaired with ridge " << ridge << "\n";
            }
            // G = R_dz A^-1  <=>  A G^H = R_dz^H (A Hermitian).
            return llt.solve(r_dz.adjoint()).adjoint();
        }
    }
    throw std::runtime_error("wiener_gain: covariance is not positive definite (n=" + std::to_string(n) + ")");
}

double wiener_mse(const CMatrix& r_dd, const CMatrix& r_dz, const CMatrix& gain)
{
    return (r_dd - gain * r_dz.adjoint()).trace().real() / static_cast<double>(r_dd.rows());
}

EstimateGrid genie_lmmse(const Observation& obs, const ChannelGenie& genie)
{
    EstimateGrid est = empty_estimate(obs, "genie_lmmse");
    const int n_layers = obs.n_layers();
    const int n_rx = obs.n_rx();
    const TfCorrelation corr(genie, obs.layout.n_subcarriers());
    const double noise_var = obs.sigma * obs.sigma;
    const CMatrix& r_tx = genie.correlation.r_tx;
    const CMatrix& r_rx = genie.correlation.r_rx;

    for (std::size_t s = 0; s < obs.layout.spans.size(); ++s) {
        const auto& span = obs.layout.spans[s];
        const CMatrix& w = obs.plan.w[s];
        const int f0 = span.start_rb * kSubcarriersPerRb;
        const int n_f = span.n_rb * kSubcarriersPerRb;
        const int n_d = n_f * kSymbolsPerSlot;

        // Layer variances [W^H R_tx W]_kk * c, rx variances [R_rx]_jj.
        const CMatrix wrw = w.adjoint() * r_tx * w;
        std::vector<double> layer_var(static_cast<std::size_t>(n_layers));
        for (int k = 0; k < n_layers; ++k)
            layer_var[static_cast<std::size_t>(k)] = wrw(k, k).real() * obs.amp;

        // Single layer: every pilot tone is an observation. Two layers: one
        // despread observation per OCC pair.
        std::vector<PairObservation> z_pts;
        if (n_layers == 1) {
            for (int t : obs.layout.mask.symbols)
                for (int f = f0; f < f0 + n_f; ++f)
                    if (obs.layout.mask.at(f, t))
                        z_pts.push_back({f, f, t});
        } else {
            z_pts = pairs_in_span(obs, span);
        }
        const auto n_z = static_cast<Eigen::Index>(z_pts.size());

        // Unit-variance correlation of the observed pair means.
        CMatrix r_zz(n_z, n_z);
        CMatrix r_dz(n_d, n_z);
        auto tones = [](const PairObservation& p) {
            return p.first == p.second ? std::vector<int>{p.first} : std::vector<int>{p.first, p.second};
        };
        for (Eigen::Index a = 0; a < n_z; ++a) {
            const auto ta = tones(z_pts[static_cast<std::size_t>(a)]);
            for (Eigen::Index b = 0; b < n_z; ++b) {
                const auto tb = tones(z_pts[static_cast<std::size_t>(b)]);
                cplx acc{};
                for (int fa : ta)
                    for (int fb : tb)
                        acc += corr(fa - fb, z_pts[static_cast<std::size_t>(a)].symbol - z_pts[static_cast<std::size_t>(b)].symbol);
                r_zz(a, b) = acc / static_cast<double>(ta.size() * tb.size());
            }
            for (int f = 0; f < n_f; ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t) {
                    cplx acc{};
                    for (int fa : ta)
                        acc += corr(f0 + f - fa, t - z_pts[static_cast<std::size_t>(a)].symbol);
                    r_dz(f * kSymbolsPerSlot + t, a) = acc / static_cast<double>(ta.size());
                }
        }

        // Residual OCC leakage of the other layer, averaged over the pairs.
        double leak_unit = 0.0;
        if (n_layers > 1) {
            for (const auto& p : z_pts)
                leak_unit += 0.5 * (1.0 - corr.frequency(p.second - p.first).real());
            leak_unit /= static_cast<double>(z_pts.size());
        }

        for (int j = 0; j < n_rx; ++j)
            for (int k = 0; k < n_layers; ++k) {
                const double v = r_rx(j, j).real() * layer_var[static_cast<std::size_t>(k)];
                double leak = 0.0;
                for (int k2 = 0; k2 < n_layers; ++k2)
                    if (k2 != k)
                        leak += r_rx(j, j).real() * layer_var[static_cast<std::size_t>(k2)] * leak_unit;
                const double pilot_noise = n_layers > 1 ? noise_var / 2.0 : noise_var;
                if (v <= 0.0)
                    continue;
                // Normalize by v so the solve is well scaled: z = g + e, e ~ (noise + leak) / v.
                const CMatrix gain = wiener_gain(r_dz, r_zz, (pilot_noise + leak) / v);
                Eigen::VectorXcd z(n_z);
                for (Eigen::Index a = 0; a < n_z; ++a)
                    z(a) = despread(obs, z_pts[static_cast<std::size_t>(a)], j, k);
                const Eigen::VectorXcd g = gain * z;
                for (int f = 0; f < n_f; ++f)
                    for (int t = 0; t < kSymbolsPerSlot; ++t)
                        est.g_hat(j, k, f0 + f, t) = g(f * kSymbolsPerSlot + t);
            }
    }
    return est;
}

EstimateGrid genie_lmmse(const Observation& obs) { return genie_lmmse(obs, obs.genie); }

double nmse(const EstimateGrid& est, const Observation& obs)
{
    if (!est.g_hat.same_shape(obs.g_true))
        throw std::invalid_argument("nmse: estimate and ground truth shapes differ");
    double acc = 0.0;
    const auto a = est.g_hat.values();
    const auto b = obs.g_true.values();
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += std::norm(a[i] - b[i]);
    return acc / (static_cast<double>(obs.layout.n_subcarriers()) * kSymbolsPerSlot);
}

double nmse(std::span<const EstimateGrid> est, std::span<const Observation> obs)
{
    if (est.size() != obs.size() || est.empty())
        throw std::invalid_argument("nmse: batch sizes differ or are empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i)
        acc += nmse(est[i], obs[i]);
    return acc / static_cast<double>(est.size());
}

Estimator classical_estimator(const std::string& id)
{
    if (id == "ls_occ")
        return [](const Observation& o) { return ls_occ(o); };
    if (id == "genie_lmmse")
        return [](const Observation& o) { return genie_lmmse(o); };
    if (id == "truth")
        return [](const Observation& o) { return EstimateGrid{o.g_true, "truth"}; };
    if (id == "ls_raw")
        return [](const Observation& o) { return ls_raw(o); };
    throw ConfigError("unknown estimator '" + id + "'");
}

}  // namespace reqlab
