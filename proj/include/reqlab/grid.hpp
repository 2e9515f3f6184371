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

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reqlab {

using cplx = std::complex<double>;

inline constexpr int kSubcarriersPerRb = 12;
inline constexpr int kSymbolsPerSlot = 14;
inline constexpr int kMinRb = 4;
inline constexpr int kMaxRb = 272;
inline constexpr int kMaxLayers = 2;

/// Raised for inconsistent or out-of-range configuration values. The message
/// names the offending key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CarrierConfig {
    int scs_khz{30};
    int n_rb{16};

    int n_subcarriers() const { return kSubcarriersPerRb * n_rb; }
    static constexpr int n_symbols() { return kSymbolsPerSlot; }
    double subcarrier_spacing_hz() const { return scs_khz * 1e3; }
    /// OFDM symbol period including the (normal) cyclic prefix share.
    double symbol_duration_s() const { return 1e-3 / (scs_khz / 15.0) / kSymbolsPerSlot; }

    void validate() const;
};

struct DmrsConfig {
    int config_type{1};
    std::vector<int> symbol_indices{2, 11};
    int n_layers{2};
    std::uint32_t seed{0};

    int n_dmrs_symbols() const { return static_cast<int>(symbol_indices.size()); }
    void validate() const;

    /// Symbol positions for 2, 3 or 4 DMRS symbols per slot.
    static std::vector<int> default_symbol_indices(int n_dmrs_symbols);
    static DmrsConfig with_symbols(int config_type, int n_dmrs_symbols, int n_layers,
                                   std::uint32_t seed = 0);
};

/// PRG bundle size; `kWideband` bundles the whole allocation into one PRG.
struct PrgConfig {
    static constexpr int kWideband = 0;
    int bundle_size{4};

    bool wideband() const { return bundle_size == kWideband; }
    void validate() const;
    std::string label() const;
};

struct PrgSpan {
    int start_rb{0};
    int n_rb{0};
    bool operator==(const PrgSpan&) const = default;
};

/// Contiguous RB partition; the last span carries the remainder.
std::vector<PrgSpan> prg_spans(int n_rb, const PrgConfig& prg);

/// Two tones sharing one OCC codeword, same DMRS symbol.
struct OccPair {
    int first{0};
    int second{0};
};

/// 0/1 DMRS occupancy over [subcarrier, symbol] plus the OCC pairing of the
/// occupied tones. Every pilot tone belongs to exactly one pair.
struct DmrsMask {
    int n_subcarriers{0};
    std::vector<std::uint8_t> mask;
    std::vector<OccPair> occ_pairs;   // subcarrier pairs, valid on every DMRS symbol
    std::vector<int> symbols;

    bool at(int f, int t) const { return mask[static_cast<std::size_t>(f) * kSymbolsPerSlot + t] != 0; }
    std::size_t pilot_count() const;
};

/// OCC sign of `port` on the first/second tone of a pair: (+,+) for port 0
/// and (+,-) for port 1.
int occ_sign(int port, bool second_tone);

struct GridLayout {
    CarrierConfig carrier;
    DmrsConfig dmrs;
    PrgConfig prg;
    std::vector<PrgSpan> spans;
    DmrsMask mask;

    int n_subcarriers() const { return carrier.n_subcarriers(); }
    int n_prg() const { return static_cast<int>(spans.size()); }
    /// RBs per PRG tile; equals n_rb for wideband bundling.
    int tile_rb() const { return prg.wideband() ? carrier.n_rb : prg.bundle_size; }
    /// Index of the PRG that owns subcarrier `f`.
    int prg_of_subcarrier(int f) const;
};

GridLayout build_grid(const CarrierConfig& carrier, const DmrsConfig& dmrs, const PrgConfig& prg);

/// Length-31 two-register Gold sequence with the usual 1600-sample warm-up.
std::vector<std::uint8_t> gold_sequence(std::uint32_t c_init, std::size_t length);

/// Complex values over [stream, subcarrier, symbol].
class ToneGrid {
public:
    ToneGrid() = default;
    ToneGrid(int n_ports, int n_subcarriers);

    int n_ports() const { return n_ports_; }
    int n_subcarriers() const { return n_subcarriers_; }

    cplx& operator()(int port, int f, int t) { return data_[index(port, f, t)]; }
    const cplx& operator()(int port, int f, int t) const { return data_[index(port, f, t)]; }

    std::span<const cplx> values() const { return data_; }
    std::span<cplx> values() { return data_; }
    bool operator==(const ToneGrid&) const = default;

private:
    std::size_t index(int port, int f, int t) const
    {
        return (static_cast<std::size_t>(port) * n_subcarriers_ + f) * kSymbolsPerSlot + t;
    }

    int n_ports_{0};
    int n_subcarriers_{0};
    std::vector<cplx> data_;
};

/// Per-layer pilots; zero off the DMRS mask.
using PilotGrid = ToneGrid;

/// QPSK pilots per layer, OCC-covered, on the layout's mask.
PilotGrid dmrs_symbols(const DmrsConfig& dmrs, const GridLayout& layout);

/// out[p] = in[perm[p]]
PilotGrid permute_layers(const PilotGrid& x, std::span<const int> perm);

/// Throws std::invalid_argument unless `perm` is a bijection on [0, n).
void check_permutation(std::span<const int> perm, int n);

std::vector<int> inverse_permutation(std::span<const int> perm);

}  // namespace reqlab
