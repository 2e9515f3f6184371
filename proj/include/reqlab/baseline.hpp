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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reqlab/chansim.hpp"

namespace reqlab {

struct EstimateGrid {
    ChannelGrid g_hat;   // [n_rx, n_layers, F, 14]
    std::string estimator_id;
};

/// y_j * conj(x_k) on the DMRS tones, zero elsewhere.
EstimateGrid ls_raw(const Observation& obs);

/// Per-pair OCC despreading followed by nearest-pilot frequency and linear
/// time interpolation, both confined to the owning PRG.
EstimateGrid ls_occ(const Observation& obs);

/// Separable time-frequency correlation of a tapped-delay-line channel:
/// r(df, dt) = sum_p P_p exp(-j 2 pi df tau_p) * J0(2 pi f_d dt).
class TfCorrelation {
public:
    TfCorrelation(const ChannelGenie& genie, int n_subcarriers);

    cplx operator()(int d_subcarrier, int d_symbol) const
    {
        return freq_[static_cast<std::size_t>(d_subcarrier + n_subcarriers_)] *
               time_[static_cast<std::size_t>(d_symbol + kSymbolsPerSlot)];
    }
    cplx frequency(int d_subcarrier) const { return freq_[static_cast<std::size_t>(d_subcarrier + n_subcarriers_)]; }
    double time(int d_symbol) const { return time_[static_cast<std::size_t>(d_symbol + kSymbolsPerSlot)]; }

private:
    int n_subcarriers_;
    std::vector<cplx> freq_;
    std::vector<double> time_;
};

/// Wiener smoother gain R_dz (R_zz + noise_var I)^-1 computed with a
/// Hermitian factorization and a 1e-12 diagonal ridge. Retries with a
/// growing ridge when the factorization fails.
CMatrix wiener_gain(const CMatrix& r_dz, const CMatrix& r_zz, double noise_var);

/// Expected per-entry MSE of the Wiener smoother: trace(R_dd - G R_dz^H) / n.
double wiener_mse(const CMatrix& r_dd, const CMatrix& r_dz, const CMatrix& gain);

/// Number of times the Wiener solve had to enlarge its ridge.
std::size_t wiener_ridge_repairs();

/// Per-PRG, per-stream LMMSE using the genie's delay profile, Doppler, spatial
/// correlation, precoders and noise level. Co-scheduled layers are removed by
/// OCC despreading and the residual leakage is treated as white noise.
EstimateGrid genie_lmmse(const Observation& obs, const ChannelGenie& genie);
EstimateGrid genie_lmmse(const Observation& obs);

/// Mean over REs of the squared error summed over rx antennas and layers.
double nmse(const EstimateGrid& est, const Observation& obs);
double nmse(std::span<const EstimateGrid> est, std::span<const Observation> obs);

using Estimator = std::function<EstimateGrid(const Observation&)>;

/// ls_occ, genie_lmmse or truth.
Estimator classical_estimator(const std::string& id);

}  // namespace reqlab
