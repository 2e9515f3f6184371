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

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reqlab/grid.hpp"
#include "reqlab/rng.hpp"

namespace reqlab {

using CMatrix = Eigen::MatrixXcd;

/// Complex values over [rx, column, subcarrier, symbol]. The column axis is a
/// transmit antenna for raw channels and a layer for precoded ones.
class ChannelGrid {
public:
    ChannelGrid() = default;
    ChannelGrid(int n_rx, int n_cols, int n_subcarriers);

    int n_rx() const { return n_rx_; }
    int n_cols() const { return n_cols_; }
    int n_subcarriers() const { return n_subcarriers_; }
    std::size_t size() const { return data_.size(); }

    cplx& operator()(int j, int k, int f, int t) { return data_[index(j, k, f, t)]; }
    const cplx& operator()(int j, int k, int f, int t) const { return data_[index(j, k, f, t)]; }

    std::span<const cplx> values() const { return data_; }
    std::span<cplx> values() { return data_; }
    bool same_shape(const ChannelGrid& o) const
    {
        return n_rx_ == o.n_rx_ && n_cols_ == o.n_cols_ && n_subcarriers_ == o.n_subcarriers_;
    }
    bool operator==(const ChannelGrid&) const = default;

private:
    std::size_t index(int j, int k, int f, int t) const
    {
        return ((static_cast<std::size_t>(j) * n_cols_ + k) * n_subcarriers_ + f) * kSymbolsPerSlot + t;
    }

    int n_rx_{0};
    int n_cols_{0};
    int n_subcarriers_{0};
    std::vector<cplx> data_;
};

/// Directory holding tap/cluster tables; REQLAB_DATA_DIR overrides the
/// build-time location.
std::filesystem::path data_directory();

enum class TapKind { rayleigh, los };

struct Tap {
    double delay_s{0.0};
    double power{0.0};   // linear
    TapKind kind{TapKind::rayleigh};
};

struct TdlProfile {
    std::string name;
    std::vector<Tap> taps;          // powers sum to one
    double delay_spread_s{0.0};
    double max_doppler_hz{0.0};

    void validate() const;
};

/// Row of a tap or cluster table file.
struct ClusterRow {
    double delay{0.0};
    double power_db{0.0};
    TapKind kind{TapKind::rayleigh};
    double aod_deg{0.0};
    double aoa_deg{0.0};
};

struct DelayTable {
    bool normalized{true};   // delays in units of the RMS delay spread, else ns
    std::vector<ClusterRow> rows;
};

/// Parses `delay power_db [type | aod_deg aoa_deg]` tables with `#` comments
/// and an optional `# delay_unit: normalized|ns` directive.
DelayTable load_delay_table(const std::filesystem::path& path);

/// Accepts TDLA / TDL-A with an explicit delay spread, or TDL-A30 / TDL-B100 /
/// TDL-C300 style names that carry the spread in nanoseconds.
TdlProfile standard_tdl_profile(const std::string& name, double delay_spread_s, double max_doppler_hz);

/// Custom profile with randomized tap count, delays and exponential-like decay.
TdlProfile random_tdl_profile(Rng& rng, double delay_spread_s, double max_doppler_hz);

struct CdlCluster {
    double delay_s{0.0};
    double power{0.0};
    double aod_rad{0.0};
    double aoa_rad{0.0};
};

struct CdlProfile {
    std::string name;
    std::vector<CdlCluster> clusters;
    double delay_spread_s{0.0};
    double max_doppler_hz{0.0};
};

/// CDL-A30 / CDL-B100 / CDL-C300 or CDL-A with an explicit delay spread.
CdlProfile cdl_profile(const std::string& name, double delay_spread_s, double max_doppler_hz);

struct SpatialCorrelation {
    std::string preset{"low"};
    CMatrix r_tx;
    CMatrix r_rx;

    /// Builds the (alpha, beta) Kronecker matrices for the named preset.
    static SpatialCorrelation from_preset(const std::string& preset, int n_tx, int n_rx);
    static SpatialCorrelation custom(CMatrix r_tx, CMatrix r_rx);
    void validate() const;
};

/// Hermitian PSD square root via eigen-decomposition; negative eigenvalues are clipped.
CMatrix hermitian_sqrt(const CMatrix& r);

enum class ChannelKind { tdl_standard, tdl_random, cdl };

ChannelKind parse_channel_kind(const std::string& s);
std::string to_string(ChannelKind k);

struct ChannelParams {
    ChannelKind kind{ChannelKind::tdl_standard};
    std::string profile{"TDL-B100"};
    double delay_spread_s{100e-9};    // used when the profile name carries no spread
    double max_doppler_hz{100.0};
    std::string correlation{"medium_a"};
    int n_tx{2};
    int n_rx{2};
    int sinusoids{32};
    std::vector<Tap> taps;            // explicit TDL taps; overrides `profile` when non-empty

    void validate() const;
};

/// Everything a genie estimator is allowed to know about a realization.
struct ChannelGenie {
    ChannelKind kind{ChannelKind::tdl_standard};
    std::string profile;
    std::vector<Tap> taps;
    double max_doppler_hz{0.0};
    double subcarrier_spacing_hz{30e3};
    double symbol_duration_s{0.0};
    SpatialCorrelation correlation;
    std::uint64_t seed{0};
};

struct ChannelRealization {
    ChannelGrid h;   // [n_rx, n_tx, F, 14]
    ChannelGenie genie;
};

ChannelRealization sample_channel(const ChannelParams& params, const CarrierConfig& carrier, std::uint64_t seed);

enum class PrecodingMode { svd, random, wideband };

PrecodingMode parse_precoding_mode(const std::string& s);
std::string to_string(PrecodingMode m);

struct PrecodingPlan {
    PrecodingMode mode{PrecodingMode::wideband};
    std::vector<CMatrix> w;   // one [n_tx, n_layers] matrix per PRG
};

/// Modified Gram-Schmidt on the columns of `a`.
CMatrix gram_schmidt(const CMatrix& a);

/// Leading right singular vectors of `h_avg`, completed to `n_layers` columns.
CMatrix svd_precoder(const CMatrix& h_avg, int n_layers);

PrecodingPlan make_precoder(PrecodingMode mode, const ChannelRealization& h, const GridLayout& layout,
                            int n_layers, std::uint64_t seed);

struct Observation {
    GridLayout layout;
    ToneGrid y;              // [n_rx, F, 14], zero off the mask
    PilotGrid x;             // [n_layers, F, 14]
    ChannelGrid g_true;      // [n_rx, n_layers, F, 14], includes sqrt(amp)
    double sigma{0.0};       // noise std actually present in y
    double sigma_reported{0.0};  // noise std fed to learned estimators
    double snr_db{0.0};
    double amp{1.0};         // power amplification c
    ChannelGenie genie;
    PrecodingPlan plan;

    int n_rx() const { return y.n_ports(); }
    int n_layers() const { return x.n_ports(); }
    bool operator==(const Observation& o) const
    {
        return y == o.y && x == o.x && g_true == o.g_true && sigma == o.sigma &&
               sigma_reported == o.sigma_reported && snr_db == o.snr_db && amp == o.amp;
    }
};

inline constexpr double kMinSnrDb = 0.0;
inline constexpr double kMaxSnrDb = 40.0;

/// Noise variance per RE for unit-power pilots and channel.
double noise_variance(double snr_db);

struct TransmitOptions {
    bool strict{true};     // enforce the [0, 40] dB SNR range
    bool noiseless{false};
};

Observation transmit_dmrs(const ChannelRealization& h, const PrecodingPlan& plan, const GridLayout& layout,
                          const PilotGrid& pilots, double snr_db, double amp, std::uint64_t seed,
                          TransmitOptions opts = {});

/// Full description of one simulated slot.
struct ScenarioSpec {
    CarrierConfig carrier;
    DmrsConfig dmrs;
    PrgConfig prg;
    ChannelParams channel;
    PrecodingMode precoding{PrecodingMode::random};
    double snr_db{20.0};
    double amp{1.0};

    void validate() const;
};

/// Channel draw, precoding and DMRS transmission for one seeded slot.
Observation simulate_slot(const ScenarioSpec& spec, std::uint64_t seed, TransmitOptions opts = {});

/// Two PRGs observing one flat channel through independent random unitary
/// precoders; `relative` is (W1)^-1 W2.
struct MraScenario {
    Observation first;
    Observation second;
    CMatrix h;
    CMatrix w1;
    CMatrix w2;
    CMatrix relative;
};

MraScenario mra_scenario(std::uint64_t seed, double snr_db = 20.0);

}  // namespace reqlab
