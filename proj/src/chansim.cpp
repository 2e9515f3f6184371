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

#include "reqlab/chansim.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#ifndef REQLAB_DATA_DIR_DEFAULT
#define REQLAB_DATA_DIR_DEFAULT "data"
#endif

namespace reqlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Ray offsets (unit angular spread) shared by every CDL cluster.
constexpr double kRayOffsets[] = {0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715, -0.3715,
                                  0.5129, -0.5129, 0.6797, -0.6797, 0.8844, -0.8844, 1.1481, -1.1481,
                                  1.5195, -1.5195, 2.1551, -2.1551};
constexpr double kClusterAsdDeg = 5.0;
constexpr double kClusterAsaDeg = 11.0;

std::string upper(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

// "TDL-B100" -> family 'B', spread 100 ns. Returns false when the name does
// not match `<prefix>[-]<letter>[digits]`.
bool parse_profile_name(const std::string& name, const std::string& prefix, char& family, double& spread_ns)
{
    std::string s = upper(name);
    if (s.rfind(prefix, 0) != 0)
        return false;
    s = s.substr(prefix.size());
    if (!s.empty() && s[0] == '-')
        s = s.substr(1);
    if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0])))
        return false;
    family = s[0];
    const std::string digits = s.substr(1);
    spread_ns = 0.0;
    if (!digits.empty()) {
        if (!std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); }))
            return false;
        spread_ns = std::stod(digits);
    }
    return true;
}

double rms_delay_spread(const std::vector<Tap>& taps)
{
    double p = 0, m1 = 0, m2 = 0;
    for (const auto& t : taps) {
        p += t.power;
        m1 += t.power * t.delay_s;
        m2 += t.power * t.delay_s * t.delay_s;
    }
    m1 /= p;
    m2 /= p;
    return std::sqrt(std::max(0.0, m2 - m1 * m1));
}

void normalize_powers(std::vector<Tap>& taps)
{
    double total = 0;
    for (const auto& t : taps)
        total += t.power;
    for (auto& t : taps)
        t.power /= total;
}

cplx unit_phasor(double phase) { return {std::cos(phase), std::sin(phase)}; }

// Doppler process of one tap on one antenna pair, sampled at every symbol.
void sum_of_sinusoids(Rng& rng, double power, double doppler_hz, double symbol_s, int n_sin,
                      std::span<cplx> out)
{
    std::fill(out.begin(), out.end(), cplx{});
    const double amp = std::sqrt(power / n_sin);
    for (int n = 0; n < n_sin; ++n) {
        const double alpha = uniform(rng, 0.0, kTwoPi);
        const double phi = uniform(rng, 0.0, kTwoPi);
        const double fd = doppler_hz * std::cos(alpha);
        const cplx step = unit_phasor(kTwoPi * fd * symbol_s);
        cplx v = amp * unit_phasor(phi);
        for (int t = 0; t < kSymbolsPerSlot; ++t, v *= step)
            out[static_cast<std::size_t>(t)] += v;
    }
}

void los_process(Rng& rng, double power, double doppler_hz, double symbol_s, std::span<cplx> out)
{
    // Specular path arriving at 45 degrees to the direction of travel.
    const double fd = doppler_hz * std::cos(std::numbers::pi / 4.0);
    const double phi = uniform(rng, 0.0, kTwoPi);
    for (int t = 0; t < kSymbolsPerSlot; ++t)
        out[static_cast<std::size_t>(t)] = std::sqrt(power) * unit_phasor(kTwoPi * fd * t * symbol_s + phi);
}

}  // namespace

ChannelGrid::ChannelGrid(int n_rx, int n_cols, int n_subcarriers)
    : n_rx_(n_rx), n_cols_(n_cols), n_subcarriers_(n_subcarriers),
      data_(static_cast<std::size_t>(n_rx) * n_cols * n_subcarriers * kSymbolsPerSlot)
{
}

std::filesystem::path data_directory()
{
    if (const char* env = std::getenv("REQLAB_DATA_DIR"); env && *env)
        return env;
    return REQLAB_DATA_DIR_DEFAULT;
}

void TdlProfile::validate() const
{
    if (taps.empty())
        throw ConfigError("channel profile " + name + " has no taps");
    double total = 0;
    for (const auto& t : taps) {
        if (t.delay_s < 0)
            throw ConfigError("channel profile " + name + " has a negative delay");
        total += t.power;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("channel profile " + name + " powers do not sum to one");
    if (max_doppler_hz < 0)
        throw ConfigError("channel.max_doppler_hz must be non-negative");
}

DelayTable load_delay_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("missing delay table file: " + path.string());
    DelayTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto pos = line.find("delay_unit:"); pos != std::string::npos && line.find('#') < pos) {
            std::istringstream ss(line.substr(pos + 11));
            std::string unit;
            ss >> unit;
            if (unit != "normalized" && unit != "ns")
                throw ConfigError(path.string() + ": unknown delay_unit '" + unit + "'");
            table.normalized = unit == "normalized";
            continue;
        }
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        std::istringstream ss(line);
        std::vector<std::string> cols;
        for (std::string tok; ss >> tok;)
            cols.push_back(tok);
        if (cols.empty())
            continue;
        if (cols.size() < 2 || cols.size() > 4)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 2 to 4 columns");
        ClusterRow row;
        try {
            row.delay = std::stod(cols[0]);
            row.power_db = std::stod(cols[1]);
            if (cols.size() == 3) {
                if (cols[2] == "los")
                    row.kind = TapKind::los;
                else if (cols[2] != "rayleigh")
                    throw ConfigError("unknown tap type '" + cols[2] + "'");
            } else if (cols.size() == 4) {
                row.aod_deg = std::stod(cols[2]);
                row.aoa_deg = std::stod(cols[3]);
            }
        } catch (const std::logic_error& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        table.rows.push_back(row);
    }
    if (table.rows.empty())
        throw ConfigError("empty delay table: " + path.string());
    return table;
}

namespace {

// Tables are read-only data; parse each file once per process.
const DelayTable& cached_delay_table(const std::filesystem::path& path)
{
    static std::mutex mu;
    static std::map<std::string, DelayTable> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(path.string());
    if (it == cache.end())
        it = cache.emplace(path.string(), load_delay_table(path)).first;
    return it->second;
}

}  // namespace

TdlProfile standard_tdl_profile(const std::string& name, double delay_spread_s, double max_doppler_hz)
{
    char family = 0;
    double spread_ns = 0;
    if (!parse_profile_name(name, "TDL", family, spread_ns) || family < 'A' || family > 'E')
        throw ConfigError("unknown channel profile '" + name + "'");
    TdlProfile p;
    p.name = name;
    p.delay_spread_s = spread_ns > 0 ? spread_ns * 1e-9 : delay_spread_s;
    p.max_doppler_hz = max_doppler_hz;
    if (p.delay_spread_s <= 0)
        throw ConfigError("channel.delay_spread_ns must be positive for profile " + name);
    const auto& table = cached_delay_table(data_directory() / "tdl" / (std::string("TDL-") + family + ".txt"));
    for (const auto& row : table.rows) {
        const double delay = table.normalized ? row.delay * p.delay_spread_s : row.delay * 1e-9;
        p.taps.push_back({delay, std::pow(10.0, row.power_db / 10.0), row.kind});
    }
    normalize_powers(p.taps);
    p.validate();
    return p;
}

TdlProfile random_tdl_profile(Rng& rng, double delay_spread_s, double max_doppler_hz)
{
    if (delay_spread_s <= 0)
        throw ConfigError("channel.delay_spread_ns must be positive for random profiles");
    TdlProfile p;
    p.name = "random";
    p.delay_spread_s = delay_spread_s;
    p.max_doppler_hz = max_doppler_hz;
    const int n_taps = uniform_int(rng, 4, 20);
    const double decay = uniform(rng, 0.5, 2.0);   // in units of the unscaled delay axis
    std::normal_distribution<double> shadow_db(0.0, 3.0);
    p.taps.push_back({0.0, 1.0, TapKind::rayleigh});
    for (int i = 1; i < n_taps; ++i) {
        const double d = uniform(rng, 0.0, 4.0);
        const double pdb = -10.0 * d / (decay * std::log(10.0)) + shadow_db(rng);
        p.taps.push_back({d, std::pow(10.0, pdb / 10.0), TapKind::rayleigh});
    }
    std::sort(p.taps.begin(), p.taps.end(), [](const Tap& a, const Tap& b) { return a.delay_s < b.delay_s; });
    normalize_powers(p.taps);
    const double rms = rms_delay_spread(p.taps);
    const double scale = rms > 0 ? delay_spread_s / rms : 0.0;
    for (auto& t : p.taps)
        t.delay_s *= scale;
    p.validate();
    return p;
}

CdlProfile cdl_profile(const std::string& name, double delay_spread_s, double max_doppler_hz)
{
    char family = 0;
    double spread_ns = 0;
    if (!parse_profile_name(name, "CDL", family, spread_ns) || family < 'A' || family > 'C')
        throw ConfigError("unknown channel profile '" + name + "'");
    CdlProfile p;
    p.name = name;
    p.delay_spread_s = spread_ns > 0 ? spread_ns * 1e-9 : delay_spread_s;
    p.max_doppler_hz = max_doppler_hz;
    if (p.delay_spread_s <= 0)
        throw ConfigError("channel.delay_spread_ns must be positive for profile " + name);
    const auto& table = cached_delay_table(data_directory() / "cdl" / (std::string("CDL-") + family + ".txt"));
    double total = 0;
    for (const auto& row : table.rows) {
        const double delay = table.normalized ? row.delay * p.delay_spread_s : row.delay * 1e-9;
        const double deg = std::numbers::pi / 180.0;
        p.clusters.push_back({delay, std::pow(10.0, row.power_db / 10.0), row.aod_deg * deg, row.aoa_deg * deg});
        total += p.clusters.back().power;
    }
    for (auto& c : p.clusters)
        c.power /= total;
    return p;
}

namespace {

CMatrix exponential_correlation(double c, int n)
{
    CMatrix r = CMatrix::Identity(n, n);
    if (n == 1)
        return r;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) {
                const double e = static_cast<double>(i - j) / (n - 1);
                r(i, j) = c == 0.0 ? 0.0 : std::pow(c, e * e);
            }
    return r;
}

}  // namespace

SpatialCorrelation SpatialCorrelation::from_preset(const std::string& preset, int n_tx, int n_rx)
{
    if (preset == "custom")
        throw ConfigError("channel.correlation 'custom' requires explicit matrices");
    struct Row {
        double alpha, beta;
    };
    static std::mutex mu;
    static std::map<std::string, std::map<std::string, Row>> cache;
    const auto path = data_directory() / "correlation.txt";
    std::map<std::string, Row> rows;
    {
        std::lock_guard lock(mu);
        auto it = cache.find(path.string());
        if (it == cache.end()) {
            std::ifstream in(path);
            if (!in)
                throw ConfigError("missing correlation preset file: " + path.string());
            std::map<std::string, Row> parsed;
            std::string line;
            while (std::getline(in, line)) {
                if (const auto hash = line.find('#'); hash != std::string::npos)
                    line.resize(hash);
                std::istringstream ss(line);
                std::string name;
                double alpha = 0, beta = 0;
                if (ss >> name >> alpha >> beta)
                    parsed[name] = {alpha, beta};
            }
            it = cache.emplace(path.string(), std::move(parsed)).first;
        }
        rows = it->second;
    }
    if (const auto r = rows.find(preset); r != rows.end()) {
        SpatialCorrelation s;
        s.preset = preset;
        s.r_tx = exponential_correlation(r->second.alpha, n_tx);
        s.r_rx = exponential_correlation(r->second.beta, n_rx);
        s.validate();
        return s;
    }
    throw ConfigError("unknown channel.correlation preset '" + preset + "'");
}

SpatialCorrelation SpatialCorrelation::custom(CMatrix r_tx, CMatrix r_rx)
{
    SpatialCorrelation s;
    s.preset = "custom";
    s.r_tx = std::move(r_tx);
    s.r_rx = std::move(r_rx);
    s.validate();
    return s;
}

void SpatialCorrelation::validate() const
{
    for (const CMatrix* r : {&r_tx, &r_rx}) {
        if (r->rows() != r->cols() || r->rows() == 0)
            throw ConfigError("correlation matrix must be square and non-empty");
        if (!r->isApprox(r->adjoint(), 1e-12))
            throw ConfigError("correlation matrix must be Hermitian");
        for (Eigen::Index i = 0; i < r->rows(); ++i)
            if (std::abs((*r)(i, i) - cplx{1.0, 0.0}) > 1e-12)
                throw ConfigError("correlation matrix must have unit diagonal");
        Eigen::SelfAdjointEigenSolver<CMatrix> es(*r);
        if (es.eigenvalues().minCoeff() < -1e-9)
            throw ConfigError("correlation matrix is not positive semidefinite");
    }
}

CMatrix hermitian_sqrt(const CMatrix& r)
{
    Eigen::SelfAdjointEigenSolver<CMatrix> es(r);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

ChannelKind parse_channel_kind(const std::string& s)
{
    if (s == "tdl_standard")
        return ChannelKind::tdl_standard;
    if (s == "tdl_random")
        return ChannelKind::tdl_random;
    if (s == "cdl")
        return ChannelKind::cdl;
    throw ConfigError("channel.kind must be tdl_standard, tdl_random or cdl, got '" + s + "'");
}

std::string to_string(ChannelKind k)
{
    switch (k) {
    case ChannelKind::tdl_standard: return "tdl_standard";
    case ChannelKind::tdl_random: return "tdl_random";
    case ChannelKind::cdl: return "cdl";
    }
    return "?";
}

void ChannelParams::validate() const
{
    if (n_tx < 1 || n_tx > 4 || n_rx < 1 || n_rx > 4)
        throw ConfigError("channel.n_tx and channel.n_rx must lie in [1, 4]");
    if (max_doppler_hz < 0 || max_doppler_hz > 450)
        throw ConfigError("channel.max_doppler_hz must lie in [0, 450], got " + std::to_string(max_doppler_hz));
    if (delay_spread_s < 1e-9 - 1e-15 || delay_spread_s > 300e-9 + 1e-15)
        throw ConfigError("channel.delay_spread_ns must lie in [1, 300], got " + std::to_string(delay_spread_s * 1e9));
    if (sinusoids < 8)
        throw ConfigError("channel.sinusoids must be at least 8");
}

ChannelRealization sample_channel(const ChannelParams& params, const CarrierConfig& carrier, std::uint64_t seed)
{
    params.validate();
    carrier.validate();
    Rng rng(derive_seed(seed, SeedStream::channel));

    ChannelRealization out;
    ChannelGenie& genie = out.genie;
    genie.kind = params.kind;
    genie.max_doppler_hz = params.max_doppler_hz;
    genie.subcarrier_spacing_hz = carrier.subcarrier_spacing_hz();
    genie.symbol_duration_s = carrier.symbol_duration_s();
    genie.seed = seed;

    const int n_sc = carrier.n_subcarriers();
    const int n_rx = params.n_rx;
    const int n_tx = params.n_tx;
    const double df = carrier.subcarrier_spacing_hz();
    const double ts = carrier.symbol_duration_s();
    out.h = ChannelGrid(n_rx, n_tx, n_sc);

    auto accumulate_tap = [&](double delay_s, int a, int b, std::span<const cplx> coef) {
        // Phase recurrence over subcarriers, re-anchored every 64 tones.
        const cplx step = unit_phasor(-kTwoPi * df * delay_s);
        cplx ph{1.0, 0.0};
        for (int f = 0; f < n_sc; ++f, ph *= step) {
            if (f % 64 == 0)
                ph = unit_phasor(-kTwoPi * f * df * delay_s);
            for (int t = 0; t < kSymbolsPerSlot; ++t)
                out.h(a, b, f, t) += coef[static_cast<std::size_t>(t)] * ph;
        }
    };

    std::vector<cplx> coef(kSymbolsPerSlot);
    if (params.kind == ChannelKind::cdl) {
        const CdlProfile prof = cdl_profile(params.profile, params.delay_spread_s, params.max_doppler_hz);
        genie.profile = prof.name;
        genie.correlation = SpatialCorrelation::from_preset("low", n_tx, n_rx);
        const double deg = std::numbers::pi / 180.0;
        constexpr int n_rays = static_cast<int>(std::size(kRayOffsets));
        for (const auto& c : prof.clusters) {
            genie.taps.push_back({c.delay_s, c.power, TapKind::rayleigh});
            std::vector<int> coupling(n_rays);
            for (int r = 0; r < n_rays; ++r)
                coupling[static_cast<std::size_t>(r)] = r;
            std::shuffle(coupling.begin(), coupling.end(), rng);
            std::vector<double> aoa(n_rays), aod(n_rays), phi(n_rays);
            for (int r = 0; r < n_rays; ++r) {
                const auto ri = static_cast<std::size_t>(r);
                aoa[ri] = c.aoa_rad + kClusterAsaDeg * deg * kRayOffsets[r];
                aod[ri] = c.aod_rad + kClusterAsdDeg * deg * kRayOffsets[coupling[ri]];
                phi[ri] = uniform(rng, 0.0, kTwoPi);
            }
            const double amp = std::sqrt(c.power / n_rays);
            for (int a = 0; a < n_rx; ++a)
                for (int b = 0; b < n_tx; ++b) {
                    std::fill(coef.begin(), coef.end(), cplx{});
                    for (std::size_t r = 0; r < aoa.size(); ++r) {
                        // Half-wavelength uniform linear arrays at both ends.
                        const double steer = std::numbers::pi * (a * std::sin(aoa[r]) + b * std::sin(aod[r]));
                        const double fd = params.max_doppler_hz * std::cos(aoa[r]);
                        for (int t = 0; t < kSymbolsPerSlot; ++t)
                            coef[static_cast<std::size_t>(t)] += amp * unit_phasor(phi[r] + steer + kTwoPi * fd * t * ts);
                    }
                    accumulate_tap(c.delay_s, a, b, coef);
                }
        }
        return out;
    }

    TdlProfile prof;
    if (!params.taps.empty()) {
        prof.name = "custom";
        prof.taps = params.taps;
        normalize_powers(prof.taps);
        prof.max_doppler_hz = params.max_doppler_hz;
        prof.validate();
    } else if (params.kind == ChannelKind::tdl_random) {
        prof = random_tdl_profile(rng, params.delay_spread_s, params.max_doppler_hz);
    } else {
        prof = standard_tdl_profile(params.profile, params.delay_spread_s, params.max_doppler_hz);
    }
    genie.profile = prof.name;
    genie.taps = prof.taps;
    genie.correlation = SpatialCorrelation::from_preset(params.correlation, n_tx, n_rx);

    for (const auto& tap : prof.taps)
        for (int a = 0; a < n_rx; ++a)
            for (int b = 0; b < n_tx; ++b) {
                if (tap.kind == TapKind::los)
                    los_process(rng, tap.power, params.max_doppler_hz, ts, coef);
                else
                    sum_of_sinusoids(rng, tap.power, params.max_doppler_hz, ts, params.sinusoids, coef);
                accumulate_tap(tap.delay_s, a, b, coef);
            }

    // Kronecker coloring R_rx^{1/2} H_w (R_tx^{1/2})^T on every RE.
    const CMatrix srx = hermitian_sqrt(genie.correlation.r_rx);
    const CMatrix stx_t = hermitian_sqrt(genie.correlation.r_tx).transpose();
    if (!srx.isIdentity(1e-14) || !stx_t.isIdentity(1e-14)) {
        std::array<cplx, 16> hw{}, tmp{};
        for (int f = 0; f < n_sc; ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t) {
                for (int a = 0; a < n_rx; ++a)
                    for (int b = 0; b < n_tx; ++b)
                        hw[static_cast<std::size_t>(a * n_tx + b)] = out.h(a, b, f, t);
                for (int a = 0; a < n_rx; ++a)
                    for (int b = 0; b < n_tx; ++b) {
                        cplx acc{};
                        for (int i = 0; i < n_rx; ++i)
                            acc += srx(a, i) * hw[static_cast<std::size_t>(i * n_tx + b)];
                        tmp[static_cast<std::size_t>(a * n_tx + b)] = acc;
                    }
                for (int a = 0; a < n_rx; ++a)
                    for (int b = 0; b < n_tx; ++b) {
                        cplx acc{};
                        for (int i = 0; i < n_tx; ++i)
                            acc += tmp[static_cast<std::size_t>(a * n_tx + i)] * stx_t(i, b);
                        out.h(a, b, f, t) = acc;
                    }
            }
    }
    return out;
}

PrecodingMode parse_precoding_mode(const std::string& s)
{
    if (s == "svd")
        return PrecodingMode::svd;
    if (s == "random")
        return PrecodingMode::random;
    if (s == "wideband")
        return PrecodingMode::wideband;
    throw ConfigError("precoding must be svd, random or wideband, got '" + s + "'");
}

std::string to_string(PrecodingMode m)
{
    switch (m) {
    case PrecodingMode::svd: return "svd";
    case PrecodingMode::random: return "random";
    case PrecodingMode::wideband: return "wideband";
    }
    return "?";
}

CMatrix gram_schmidt(const CMatrix& a)
{
    CMatrix q = a;
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
        for (Eigen::Index i = 0; i < k; ++i)
            q.col(k) -= q.col(i).dot(q.col(k)) * q.col(i);
        const double n = q.col(k).norm();
        if (n < 1e-12)
            throw std::runtime_error("gram_schmidt: linearly dependent columns");
        q.col(k) /= n;
    }
    return q;
}

CMatrix svd_precoder(const CMatrix& h_avg, int n_layers)
{
    // The full V is unitary, so columns past the numerical rank already form
    // an orthonormal complement of the leading singular vectors.
    Eigen::JacobiSVD<CMatrix> svd(h_avg, Eigen::ComputeFullV);
    return svd.matrixV().leftCols(n_layers);
}

PrecodingPlan make_precoder(PrecodingMode mode, const ChannelRealization& h, const GridLayout& layout,
                            int n_layers, std::uint64_t seed)
{
    const int n_tx = h.h.n_cols();
    if (n_layers < 1 || n_layers > n_tx)
        throw ConfigError("dmrs.n_layers must not exceed channel.n_tx");
    PrecodingPlan plan;
    plan.mode = mode;
    Rng rng(derive_seed(seed, SeedStream::precoder));
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    for (const auto& span : layout.spans) {
        switch (mode) {
        case PrecodingMode::wideband:
            plan.w.push_back(CMatrix::Identity(n_tx, n_layers));
            break;
        case PrecodingMode::random: {
            CMatrix a(n_tx, n_layers);
            for (Eigen::Index i = 0; i < a.size(); ++i)
                a(i) = cplx{gauss(rng), gauss(rng)};
            plan.w.push_back(gram_schmidt(a));
            break;
        }
        case PrecodingMode::svd: {
            CMatrix avg = CMatrix::Zero(h.h.n_rx(), n_tx);
            const int f0 = span.start_rb * kSubcarriersPerRb;
            const int f1 = f0 + span.n_rb * kSubcarriersPerRb;
            for (int f = f0; f < f1; ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    for (int a = 0; a < h.h.n_rx(); ++a)
                        for (int b = 0; b < n_tx; ++b)
                            avg(a, b) += h.h(a, b, f, t);
            avg /= static_cast<double>((f1 - f0) * kSymbolsPerSlot);
            plan.w.push_back(svd_precoder(avg, n_layers));
            break;
        }
        }
    }
    return plan;
}

double noise_variance(double snr_db)
{
    return std::pow(10.0, -snr_db / 10.0);
}

Observation transmit_dmrs(const ChannelRealization& h, const PrecodingPlan& plan, const GridLayout& layout,
                          const PilotGrid& pilots, double snr_db, double amp, std::uint64_t seed,
                          TransmitOptions opts)
{
    if (opts.strict && !opts.noiseless && (snr_db < kMinSnrDb || snr_db > kMaxSnrDb))
        throw ConfigError("snr_db " + std::to_string(snr_db) + " outside the supported range [0, 40] dB");
    if (!(amp > 0))
        throw ConfigError("amp must be positive");
    const int n_sc = layout.n_subcarriers();
    const int n_rx = h.h.n_rx();
    const int n_tx = h.h.n_cols();
    const int n_layers = pilots.n_ports();
    if (h.h.n_subcarriers() != n_sc || pilots.n_subcarriers() != n_sc)
        throw std::invalid_argument("transmit_dmrs: grid sizes disagree");
    if (static_cast<int>(plan.w.size()) != layout.n_prg())
        throw std::invalid_argument("transmit_dmrs: precoding plan does not match the PRG count");
    for (const auto& w : plan.w)
        if (w.rows() != n_tx || w.cols() != n_layers)
            throw std::invalid_argument("transmit_dmrs: precoder shape mismatch");

    Observation obs;
    obs.layout = layout;
    obs.x = pilots;
    obs.snr_db = snr_db;
    obs.amp = amp;
    obs.sigma = opts.noiseless ? 0.0 : std::sqrt(noise_variance(snr_db));
    obs.sigma_reported = obs.sigma;
    obs.genie = h.genie;
    obs.plan = plan;
    obs.g_true = ChannelGrid(n_rx, n_layers, n_sc);
    obs.y = ToneGrid(n_rx, n_sc);

    const double gain = std::sqrt(amp);
    for (int f = 0; f < n_sc; ++f) {
        const CMatrix& w = plan.w[static_cast<std::size_t>(layout.prg_of_subcarrier(f))];
        for (int t = 0; t < kSymbolsPerSlot; ++t)
            for (int j = 0; j < n_rx; ++j)
                for (int k = 0; k < n_layers; ++k) {
                    cplx acc{};
                    for (int b = 0; b < n_tx; ++b)
                        acc += h.h(j, b, f, t) * w(b, k);
                    obs.g_true(j, k, f, t) = gain * acc;
                }
    }

    Rng rng(derive_seed(seed, SeedStream::noise));
    std::normal_distribution<double> gauss(0.0, obs.sigma / std::sqrt(2.0));
    for (int j = 0; j < n_rx; ++j)
        for (int f = 0; f < n_sc; ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t) {
                if (!layout.mask.at(f, t))
                    continue;
                cplx acc{};
                for (int k = 0; k < n_layers; ++k)
                    acc += obs.g_true(j, k, f, t) * pilots(k, f, t);
                if (!opts.noiseless)
                    acc += cplx{gauss(rng), gauss(rng)};
                obs.y(j, f, t) = acc;
            }
    return obs;
}

void ScenarioSpec::validate() const
{
    carrier.validate();
    dmrs.validate();
    prg.validate();
    channel.validate();
    if (dmrs.n_layers > channel.n_tx)
        throw ConfigError("dmrs.n_layers must not exceed channel.n_tx");
}

Observation simulate_slot(const ScenarioSpec& spec, std::uint64_t seed, TransmitOptions opts)
{
    spec.validate();
    const GridLayout layout = build_grid(spec.carrier, spec.dmrs, spec.prg);
    const PilotGrid pilots = dmrs_symbols(spec.dmrs, layout);
    const ChannelRealization h = sample_channel(spec.channel, spec.carrier, seed);
    const PrecodingPlan plan = make_precoder(spec.precoding, h, layout, spec.dmrs.n_layers, seed);
    return transmit_dmrs(h, plan, layout, pilots, spec.snr_db, spec.amp, seed, opts);
}

MraScenario mra_scenario(std::uint64_t seed, double snr_db)
{
    ScenarioSpec spec;
    spec.carrier = {30, kMinRb};
    spec.dmrs = DmrsConfig::with_symbols(1, 2, 2);
    spec.prg.bundle_size = PrgConfig::kWideband;
    spec.channel.kind = ChannelKind::tdl_standard;
    spec.channel.profile = "TDL-A";
    spec.channel.max_doppler_hz = 0.0;
    spec.channel.correlation = "low";

    const GridLayout layout = build_grid(spec.carrier, spec.dmrs, spec.prg);
    const PilotGrid pilots = dmrs_symbols(spec.dmrs, layout);

    // One flat draw shared by both PRGs.
    Rng rng(derive_seed(seed, SeedStream::channel));
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    CMatrix hm(2, 2);
    for (Eigen::Index i = 0; i < hm.size(); ++i)
        hm(i) = cplx{gauss(rng), gauss(rng)};
    ChannelRealization h;
    h.h = ChannelGrid(2, 2, layout.n_subcarriers());
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int f = 0; f < layout.n_subcarriers(); ++f)
                for (int t = 0; t < kSymbolsPerSlot; ++t)
                    h.h(a, b, f, t) = hm(a, b);
    h.genie.kind = ChannelKind::tdl_standard;
    h.genie.profile = "flat";
    h.genie.taps = {{0.0, 1.0, TapKind::rayleigh}};
    h.genie.subcarrier_spacing_hz = spec.carrier.subcarrier_spacing_hz();
    h.genie.symbol_duration_s = spec.carrier.symbol_duration_s();
    h.genie.correlation = SpatialCorrelation::from_preset("low", 2, 2);
    h.genie.seed = seed;

    MraScenario s;
    s.h = hm;
    const auto p1 = make_precoder(PrecodingMode::random, h, layout, 2, derive_seed(seed, 1));
    const auto p2 = make_precoder(PrecodingMode::random, h, layout, 2, derive_seed(seed, 2));
    s.w1 = p1.w.front();
    s.w2 = p2.w.front();
    s.relative = s.w1.inverse() * s.w2;
    s.first = transmit_dmrs(h, p1, layout, pilots, snr_db, 1.0, derive_seed(seed, 3));
    s.second = transmit_dmrs(h, p2, layout, pilots, snr_db, 1.0, derive_seed(seed, 4));
    return s;
}

}  // namespace reqlab
