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

#include "reqlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reqlab {

void CarrierConfig::validate() const
{
    if (scs_khz != 15 && scs_khz != 30)
        throw ConfigError("carrier.scs_khz must be 15 or 30, got " + std::to_string(scs_khz));
    if (n_rb < kMinRb || n_rb > kMaxRb)
        throw ConfigError("carrier.n_rb must lie in [4, 272], got " + std::to_string(n_rb));
}

std::vector<int> DmrsConfig::default_symbol_indices(int n_dmrs_symbols)
{
    switch (n_dmrs_symbols) {
    case 2: return {2, 11};
    case 3: return {2, 7, 11};
    case 4: return {2, 5, 8, 11};
    default:
        throw ConfigError("dmrs.n_symbols must be 2, 3 or 4, got " + std::to_string(n_dmrs_symbols));
    }
}

DmrsConfig DmrsConfig::with_symbols(int config_type, int n_dmrs_symbols, int n_layers, std::uint32_t seed)
{
    DmrsConfig cfg;
    cfg.config_type = config_type;
    cfg.symbol_indices = default_symbol_indices(n_dmrs_symbols);
    cfg.n_layers = n_layers;
    cfg.seed = seed;
    return cfg;
}

void DmrsConfig::validate() const
{
    if (config_type != 1 && config_type != 2)
        throw ConfigError("dmrs.config_type must be 1 or 2, got " + std::to_string(config_type));
    if (n_dmrs_symbols() < 2 || n_dmrs_symbols() > 4)
        throw ConfigError("dmrs.n_symbols must be 2, 3 or 4, got " + std::to_string(n_dmrs_symbols()));
    for (std::size_t i = 0; i < symbol_indices.size(); ++i) {
        const int s = symbol_indices[i];
        if (s < 0 || s >= kSymbolsPerSlot)
            throw ConfigError("dmrs.symbol_indices entries must lie in [0, 13]");
        if (i > 0 && s <= symbol_indices[i - 1])
            throw ConfigError("dmrs.symbol_indices must be strictly increasing");
    }
    // Both ports of the single CDM group are separated by the frequency OCC.
    if (n_layers < 1 || n_layers > kMaxLayers)
        throw ConfigError("dmrs.n_layers must be 1 or 2, got " + std::to_string(n_layers));
}

void PrgConfig::validate() const
{
    if (bundle_size != 2 && bundle_size != 4 && bundle_size != kWideband)
        throw ConfigError("prg.bundle_size must be 2, 4 or wideband");
}

std::string PrgConfig::label() const
{
    return wideband() ? "wideband" : std::to_string(bundle_size);
}

std::vector<PrgSpan> prg_spans(int n_rb, const PrgConfig& prg)
{
    if (n_rb <= 0)
        throw ConfigError("carrier.n_rb must be positive");
    if (prg.wideband())
        return {PrgSpan{0, n_rb}};
    if (prg.bundle_size > n_rb)
        throw ConfigError("prg.bundle_size " + std::to_string(prg.bundle_size) + " exceeds carrier.n_rb " +
                          std::to_string(n_rb));
    std::vector<PrgSpan> spans;
    for (int start = 0; start < n_rb; start += prg.bundle_size)
        spans.push_back({start, std::min(prg.bundle_size, n_rb - start)});
    return spans;
}

std::size_t DmrsMask::pilot_count() const
{
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

int occ_sign(int port, bool second_tone)
{
    return (port == 1 && second_tone) ? -1 : 1;
}

int GridLayout::prg_of_subcarrier(int f) const
{
    const int rb = f / kSubcarriersPerRb;
    if (prg.wideband())
        return 0;
    return rb / prg.bundle_size;
}

namespace {

// CDM group 0 tones inside one RB, grouped into OCC pairs.
std::vector<OccPair> rb_pairs(int config_type)
{
    if (config_type == 1)
        return {{0, 2}, {4, 6}, {8, 10}};
    return {{0, 1}, {6, 7}};
}

}  // namespace

GridLayout build_grid(const CarrierConfig& carrier, const DmrsConfig& dmrs, const PrgConfig& prg)
{
    carrier.validate();
    dmrs.validate();
    prg.validate();

    GridLayout layout;
    layout.carrier = carrier;
    layout.dmrs = dmrs;
    layout.prg = prg;
    layout.spans = prg_spans(carrier.n_rb, prg);

    DmrsMask& m = layout.mask;
    m.n_subcarriers = carrier.n_subcarriers();
    m.mask.assign(static_cast<std::size_t>(m.n_subcarriers) * kSymbolsPerSlot, 0);
    m.symbols = dmrs.symbol_indices;
    const auto pairs = rb_pairs(dmrs.config_type);
    for (int rb = 0; rb < carrier.n_rb; ++rb) {
        for (const auto& p : pairs) {
            const int f0 = rb * kSubcarriersPerRb;
            m.occ_pairs.push_back({f0 + p.first, f0 + p.second});
            for (int t : dmrs.symbol_indices) {
                m.mask[static_cast<std::size_t>(f0 + p.first) * kSymbolsPerSlot + t] = 1;
                m.mask[static_cast<std::size_t>(f0 + p.second) * kSymbolsPerSlot + t] = 1;
            }
        }
    }
    return layout;
}

std::vector<std::uint8_t> gold_sequence(std::uint32_t c_init, std::size_t length)
{
    constexpr std::size_t kNc = 1600;
    const std::size_t total = kNc + length + 31;
    std::vector<std::uint8_t> x1(total, 0), x2(total, 0);
    x1[0] = 1;
    for (int i = 0; i < 31; ++i)
        x2[i] = static_cast<std::uint8_t>((c_init >> i) & 1u);
    for (std::size_t n = 0; n + 31 < total; ++n) {
        x1[n + 31] = x1[n + 3] ^ x1[n];
        x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n];
    }
    std::vector<std::uint8_t> c(length);
    for (std::size_t n = 0; n < length; ++n)
        c[n] = x1[n + kNc] ^ x2[n + kNc];
    return c;
}

ToneGrid::ToneGrid(int n_ports, int n_subcarriers)
    : n_ports_(n_ports), n_subcarriers_(n_subcarriers),
      data_(static_cast<std::size_t>(n_ports) * n_subcarriers * kSymbolsPerSlot)
{
}

PilotGrid dmrs_symbols(const DmrsConfig& dmrs, const GridLayout& layout)
{
    if (dmrs.symbol_indices != layout.mask.symbols)
        throw std::invalid_argument("dmrs_symbols: layout was built for different DMRS symbols");
    const int n_sc = layout.n_subcarriers();
    PilotGrid x(dmrs.n_layers, n_sc);
    const double a = 1.0 / std::sqrt(2.0);
    const std::size_t n_pilots = layout.mask.occ_pairs.size() * 2;
    for (int t : dmrs.symbol_indices) {
        // One c_init per DMRS symbol, derived from the configured seed.
        const auto c_init = static_cast<std::uint32_t>((static_cast<std::uint64_t>(dmrs.seed) * 14u + t) & 0x7fffffffu);
        const auto bits = gold_sequence(c_init, 2 * n_pilots);
        std::size_t m = 0;
        for (const auto& pair : layout.mask.occ_pairs) {
            for (int tone = 0; tone < 2; ++tone, ++m) {
                const cplx r{a * (1.0 - 2.0 * bits[2 * m]), a * (1.0 - 2.0 * bits[2 * m + 1])};
                const int f = tone == 0 ? pair.first : pair.second;
                for (int port = 0; port < dmrs.n_layers; ++port)
                    x(port, f, t) = static_cast<double>(occ_sign(port, tone == 1)) * r;
            }
        }
    }
    return x;
}

void check_permutation(std::span<const int> perm, int n)
{
    if (static_cast<int>(perm.size()) != n)
        throw std::invalid_argument("permutation length " + std::to_string(perm.size()) + " does not match " +
                                    std::to_string(n) + " layers");
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int p : perm) {
        if (p < 0 || p >= n || seen[static_cast<std::size_t>(p)])
            throw std::invalid_argument("permutation is not a bijection");
        seen[static_cast<std::size_t>(p)] = true;
    }
}

std::vector<int> inverse_permutation(std::span<const int> perm)
{
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    return inv;
}

PilotGrid permute_layers(const PilotGrid& x, std::span<const int> perm)
{
    check_permutation(perm, x.n_ports());
    PilotGrid out(x.n_ports(), x.n_subcarriers());
    for (int p = 0; p < x.n_ports(); ++p)
        for (int f = 0; f < x.n_subcarriers(); ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t)
                out(p, f, t) = x(perm[static_cast<std::size_t>(p)], f, t);
    return out;
}

}  // namespace reqlab
