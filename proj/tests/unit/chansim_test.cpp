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

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "reqlab/chansim.hpp"

using namespace reqlab;

namespace {

constexpr double kPi = std::numbers::pi;

ChannelParams siso_taps(std::vector<Tap> taps, double doppler)
{
    ChannelParams p;
    p.n_tx = 1;
    p.n_rx = 1;
    p.correlation = "low";
    p.max_doppler_hz = doppler;
    p.taps = std::move(taps);
    return p;
}

GridLayout small_layout(int n_rb = 4, int bundle = 2, int layers = 2, int n_dmrs = 2)
{
    return build_grid({30, n_rb}, DmrsConfig::with_symbols(1, n_dmrs, layers), {bundle});
}

}  // namespace

TEST_CASE("single tap without Doppler is flat")
{
    const auto h = sample_channel(siso_taps({{0.0, 1.0, TapKind::rayleigh}}, 0.0), {30, 4}, 3);
    const cplx ref = h.h(0, 0, 0, 0);
    CHECK(std::abs(ref) > 0);
    for (int f = 0; f < 48; ++f)
        for (int t = 0; t < kSymbolsPerSlot; ++t)
            CHECK(std::abs(h.h(0, 0, f, t) - ref) < 1e-12);
}

TEST_CASE("two-tap frequency correlation matches the tap sum")
{
    // Null at 4 subcarriers (120 kHz) for tau = 1 / 240 kHz.
    const double tau = 1.0 / 240e3;
    const auto params = siso_taps({{0.0, 0.5, TapKind::rayleigh}, {tau, 0.5, TapKind::rayleigh}}, 0.0);
    const int n = 10000;
    const int max_lag = 8;
    std::vector<cplx> acc(max_lag + 1);
    for (int s = 0; s < n; ++s) {
        const auto h = sample_channel(params, {30, 4}, static_cast<std::uint64_t>(s));
        for (int d = 0; d <= max_lag; ++d)
            acc[static_cast<std::size_t>(d)] += h.h(0, 0, 10, 0) * std::conj(h.h(0, 0, 10 + d, 0));
    }
    for (int d = 0; d <= max_lag; ++d) {
        const double df = d * 30e3;
        const double expected = std::abs((1.0 + std::polar(1.0, -2 * kPi * df * tau)) / 2.0);
        CHECK(std::abs(std::abs(acc[static_cast<std::size_t>(d)] / static_cast<double>(n)) - expected) < 0.03);
    }
    CHECK(std::abs(acc[4]) / n < 0.03);
}

TEST_CASE("tap process autocorrelation follows J0")
{
    const double fd = 450.0;
    const auto params = siso_taps({{0.0, 1.0, TapKind::rayleigh}}, fd);
    const CarrierConfig carrier{15, 4};
    const int n = 10000;
    std::vector<cplx> acc(kSymbolsPerSlot);
    for (int s = 0; s < n; ++s) {
        const auto h = sample_channel(params, carrier, static_cast<std::uint64_t>(s) + 77);
        for (int d = 0; d < kSymbolsPerSlot; ++d)
            acc[static_cast<std::size_t>(d)] += h.h(0, 0, 0, 0) * std::conj(h.h(0, 0, 0, d));
    }
    for (int d = 0; d < kSymbolsPerSlot; ++d) {
        const double expected = std::cyl_bessel_j(0.0, 2 * kPi * fd * d * carrier.symbol_duration_s());
        const cplx got = acc[static_cast<std::size_t>(d)] / static_cast<double>(n);
        CHECK(std::abs(got.real() - expected) < 0.04);
        CHECK(std::abs(got.imag()) < 0.04);
    }
}

TEST_CASE("standard profiles are unit power per entry")
{
    for (const char* name : {"TDL-A30", "TDL-B100", "TDL-C300", "TDL-D30", "TDL-E30"}) {
        ChannelParams p;
        p.profile = name;
        p.correlation = "medium_a";
        p.max_doppler_hz = 50;
        const int n = 10000;
        std::vector<double> pw(4, 0.0);
        for (int s = 0; s < n; ++s) {
            const auto h = sample_channel(p, {30, 4}, static_cast<std::uint64_t>(s));
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    pw[static_cast<std::size_t>(j * 2 + k)] += std::norm(h.h(j, k, 17, 5));
        }
        for (double v : pw) {
            INFO(name);
            CHECK(v / n >= 0.95);
            CHECK(v / n <= 1.05);
        }
    }
}

TEST_CASE("Kronecker coloring reproduces the preset covariance")
{
    for (const char* preset : {"low", "medium_a", "high"}) {
        ChannelParams p;
        p.profile = "TDL-A30";
        p.correlation = preset;
        p.max_doppler_hz = 0;
        const auto corr = SpatialCorrelation::from_preset(preset, 2, 2);
        const int n = 10000;
        CMatrix cov = CMatrix::Zero(4, 4);
        for (int s = 0; s < n; ++s) {
            const auto h = sample_channel(p, {30, 4}, static_cast<std::uint64_t>(s) + 1000);
            Eigen::VectorXcd v(4);
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    v(j * 2 + k) = h.h(j, k, 3, 0);
            cov += v * v.adjoint();
        }
        cov /= n;
        // E[h_ab h*_a'b'] = R_rx(a, a') R_tx(b, b')
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int a2 = 0; a2 < 2; ++a2)
                    for (int b2 = 0; b2 < 2; ++b2) {
                        INFO(preset);
                        const cplx expected = corr.r_rx(a, a2) * corr.r_tx(b, b2);
                        CHECK(std::abs(cov(a * 2 + b, a2 * 2 + b2) - expected) < 0.05);
                    }
        if (std::string(preset) == "low")
            CHECK((cov - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.05);
    }
}

TEST_CASE("correlation presets are valid")
{
    for (const char* preset : {"low", "medium", "medium_a", "high"})
        for (int n : {1, 2, 4}) {
            const auto c = SpatialCorrelation::from_preset(preset, n, n);
            CHECK_NOTHROW(c.validate());
            CHECK(c.r_tx.rows() == n);
        }
    CHECK_THROWS_AS(SpatialCorrelation::from_preset("extreme", 2, 2), ConfigError);
    CMatrix bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK_THROWS(SpatialCorrelation::custom(bad, CMatrix::Identity(2, 2)));
    const CMatrix r = SpatialCorrelation::from_preset("high", 4, 4).r_rx;
    const CMatrix s = hermitian_sqrt(r);
    CHECK((s * s - r).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("random profiles hit the requested delay spread")
{
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const double ds = uniform(rng, 10e-9, 300e-9);
        const auto prof = random_tdl_profile(rng, ds, 100.0);
        double psum = 0, mean = 0, sq = 0;
        for (const auto& t : prof.taps) {
            CHECK(t.delay_s >= 0);
            psum += t.power;
            mean += t.power * t.delay_s;
            sq += t.power * t.delay_s * t.delay_s;
        }
        CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::sqrt(sq - mean * mean) == doctest::Approx(ds).epsilon(1e-9));
    }
}

TEST_CASE("standard profile scaling")
{
    const auto a = standard_tdl_profile("TDL-B100", 0, 10);
    const auto b = standard_tdl_profile("TDLB", 100e-9, 10);
    REQUIRE(a.taps.size() == b.taps.size());
    for (std::size_t i = 0; i < a.taps.size(); ++i)
        CHECK(a.taps[i].delay_s == doctest::Approx(b.taps[i].delay_s));
    const auto d = standard_tdl_profile("TDL-D30", 0, 10);
    CHECK(d.taps.front().kind == TapKind::los);
    CHECK_THROWS_AS(standard_tdl_profile("TDL-Q30", 0, 10), ConfigError);
}

TEST_CASE("missing tap tables are reported")
{
    const char* old = std::getenv("REQLAB_DATA_DIR");
    const std::string saved = old ? old : "";
    setenv("REQLAB_DATA_DIR", "/nonexistent/reqlab", 1);
    CHECK_THROWS(standard_tdl_profile("TDL-A30", 0, 10));
    if (old)
        setenv("REQLAB_DATA_DIR", saved.c_str(), 1);
    else
        unsetenv("REQLAB_DATA_DIR");
    CHECK_NOTHROW(standard_tdl_profile("TDL-A30", 0, 10));
}

TEST_CASE("cdl channels are finite and roughly unit power")
{
    ChannelParams p;
    p.kind = ChannelKind::cdl;
    p.profile = "CDL-A100";
    double pw = 0;
    const int n = 300;
    for (int s = 0; s < n; ++s) {
        const auto h = sample_channel(p, {30, 4}, static_cast<std::uint64_t>(s));
        for (const auto& v : h.h.values())
            REQUIRE(std::isfinite(v.real()));
        pw += std::norm(h.h(1, 0, 20, 7));
    }
    CHECK(pw / n > 0.8);
    CHECK(pw / n < 1.2);
}

TEST_CASE("precoder contracts")
{
    ChannelParams p;
    const auto layout = small_layout(8, 2);
    const auto h = sample_channel(p, layout.carrier, 1);
    const auto rnd = make_precoder(PrecodingMode::random, h, layout, 2, 9);
    REQUIRE(rnd.w.size() == 4);
    for (const auto& w : rnd.w)
        CHECK((w.adjoint() * w - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((rnd.w[0] - rnd.w[1]).norm() > 1e-3);
    const auto wb = make_precoder(PrecodingMode::wideband, h, layout, 2, 9);
    for (const auto& w : wb.w)
        CHECK(w == CMatrix::Identity(2, 2));
    const auto sv = make_precoder(PrecodingMode::svd, h, layout, 2, 9);
    for (const auto& w : sv.w)
        CHECK((w.adjoint() * w - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(make_precoder(PrecodingMode::random, h, layout, 3, 9), ConfigError);
}

TEST_CASE("svd precoder maximizes the beamforming gain")
{
    CMatrix hbar(2, 2);
    hbar << cplx{0.9, -0.3}, cplx{0.2, 0.7}, cplx{-0.4, 0.1}, cplx{1.1, 0.5};
    const CMatrix w = svd_precoder(hbar, 1);
    const double gain = (hbar * w).norm();
    double best = 0;
    for (int i = 0; i < 100; ++i)
        for (int k = 0; k < 100; ++k) {
            const double th = (kPi / 2) * i / 99.0;
            const double ph = 2 * kPi * k / 100.0;
            Eigen::VectorXcd u(2);
            u << std::cos(th), std::sin(th) * std::polar(1.0, ph);
            best = std::max(best, (hbar * u).norm());
        }
    CHECK(std::abs(gain - best) <= 1e-3);
    CHECK(gain >= best - 1e-12);
}

TEST_CASE("svd precoder completes rank-deficient channels")
{
    CMatrix hbar(2, 2);
    hbar << 1, 1, 1, 1;
    const CMatrix w = svd_precoder(hbar, 2);
    CHECK((w.adjoint() * w - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((hbar * w.col(1)).norm() < 1e-10);
}

TEST_CASE("noiseless transmission is the exact pilot product")
{
    ScenarioSpec spec;
    spec.carrier = {30, 8};
    spec.amp = 2.5;
    const auto obs = simulate_slot(spec, 42, {.strict = true, .noiseless = true});
    CHECK(obs.sigma == 0.0);
    for (int j = 0; j < 2; ++j)
        for (int f = 0; f < obs.layout.n_subcarriers(); ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t) {
                cplx expect{};
                if (obs.layout.mask.at(f, t))
                    for (int k = 0; k < 2; ++k)
                        expect += obs.g_true(j, k, f, t) * obs.x(k, f, t);
                CHECK(std::abs(obs.y(j, f, t) - expect) < 1e-12);
            }
}

TEST_CASE("noise power matches the SNR definition")
{
    ScenarioSpec spec;
    spec.carrier = {30, 100};
    spec.dmrs = DmrsConfig::with_symbols(1, 4, 2);
    spec.channel.n_rx = 4;
    spec.snr_db = 0.0;
    double acc = 0;
    std::size_t count = 0;
    for (std::uint64_t s = 0; count < 100000; ++s) {
        const auto noisy = simulate_slot(spec, s);
        const auto clean = simulate_slot(spec, s, {.strict = true, .noiseless = true});
        for (int j = 0; j < 4; ++j)
            for (int f = 0; f < noisy.layout.n_subcarriers(); ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    if (noisy.layout.mask.at(f, t)) {
                        acc += std::norm(noisy.y(j, f, t) - clean.y(j, f, t));
                        ++count;
                    }
    }
    CHECK(acc / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("power amplification scales the precoded channel")
{
    ScenarioSpec spec;
    spec.carrier = {30, 4};
    const auto a = simulate_slot(spec, 5);
    spec.amp = 4.0;
    const auto b = simulate_slot(spec, 5);
    for (std::size_t i = 0; i < a.g_true.size(); ++i)
        CHECK(std::abs(b.g_true.values()[i] - 2.0 * a.g_true.values()[i]) < 1e-12);
    CHECK(b.amp == 4.0);
}

TEST_CASE("snr outside the supported range is rejected")
{
    ScenarioSpec spec;
    spec.carrier = {30, 4};
    spec.snr_db = 41;
    CHECK_THROWS_AS(simulate_slot(spec, 1), ConfigError);
    spec.snr_db = -1;
    CHECK_THROWS_AS(simulate_slot(spec, 1), ConfigError);
    CHECK_NOTHROW(simulate_slot(spec, 1, {.strict = false, .noiseless = false}));
}

TEST_CASE("simulation is deterministic in the seed")
{
    ScenarioSpec spec;
    spec.carrier = {30, 6};
    spec.channel.kind = ChannelKind::tdl_random;
    CHECK(simulate_slot(spec, 17) == simulate_slot(spec, 17));
    CHECK_FALSE(simulate_slot(spec, 17) == simulate_slot(spec, 18));
}

TEST_CASE("multi-reference alignment scenario identities")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = mra_scenario(seed);
        CHECK((s.w1.inverse() * s.w1 - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((s.relative.adjoint() * s.relative - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
        const double c = std::sqrt(s.first.amp);
        for (int f : {0, 13, 40})
            for (int t : {0, 6}) {
                CMatrix g1(2, 2), g2(2, 2);
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        g1(j, k) = s.first.g_true(j, k, f, t);
                        g2(j, k) = s.second.g_true(j, k, f, t);
                    }
                CHECK((g1 - c * s.h * s.w1).cwiseAbs().maxCoeff() < 1e-12);
                CHECK((g2 - g1 * s.relative).cwiseAbs().maxCoeff() < 1e-10);
            }
    }
}
