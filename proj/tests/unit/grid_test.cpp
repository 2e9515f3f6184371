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

#include <numeric>
#include <set>

#include "reqlab/grid.hpp"
#include "reqlab/rng.hpp"

using namespace reqlab;

namespace {

GridLayout layout_for(int n_rb, int bundle, int type = 1, int n_dmrs = 2, int layers = 2)
{
    CarrierConfig c{30, n_rb};
    DmrsConfig d = DmrsConfig::with_symbols(type, n_dmrs, layers);
    PrgConfig p{bundle};
    return build_grid(c, d, p);
}

// Plain-array reference of the Gold construction: x1 fixed to 1,0,...,0,
// x2 seeded by c_init, output after discarding 1600 samples.
std::vector<std::uint8_t> gold_reference(std::uint32_t c_init, std::size_t n)
{
    const std::size_t nc = 1600;
    std::vector<std::uint8_t> x1(n + nc + 31, 0), x2(n + nc + 31, 0);
    x1[0] = 1;
    for (int i = 0; i < 31; ++i)
        x2[static_cast<std::size_t>(i)] = (c_init >> i) & 1u;
    for (std::size_t i = 0; i + 31 < x1.size(); ++i) {
        x1[i + 31] = (x1[i + 3] + x1[i]) % 2;
        x2[i + 31] = (x2[i + 3] + x2[i + 2] + x2[i + 1] + x2[i]) % 2;
    }
    std::vector<std::uint8_t> c(n);
    for (std::size_t i = 0; i < n; ++i)
        c[i] = (x1[i + nc] + x2[i + nc]) % 2;
    return c;
}

}  // namespace

TEST_CASE("prg spans follow the partition rule")
{
    CHECK(prg_spans(4, {2}) == std::vector<PrgSpan>{{0, 2}, {2, 2}});
    CHECK(prg_spans(7, {4}) == std::vector<PrgSpan>{{0, 4}, {4, 3}});
    CHECK(prg_spans(272, {PrgConfig::kWideband}) == std::vector<PrgSpan>{{0, 272}});
}

TEST_CASE("prg spans partition every allocation")
{
    for (int bundle : {2, 4, PrgConfig::kWideband})
        for (int n_rb = kMinRb; n_rb <= kMaxRb; ++n_rb) {
            const auto spans = prg_spans(n_rb, {bundle});
            int next = 0;
            for (std::size_t i = 0; i < spans.size(); ++i) {
                REQUIRE(spans[i].start_rb == next);
                REQUIRE(spans[i].n_rb > 0);
                if (i + 1 < spans.size())
                    REQUIRE(spans[i].n_rb == bundle);
                else if (bundle != PrgConfig::kWideband)
                    REQUIRE(spans[i].n_rb <= bundle);
                next += spans[i].n_rb;
            }
            REQUIRE(next == n_rb);
        }
}

TEST_CASE("inconsistent configurations are rejected")
{
    CHECK_THROWS_AS(build_grid({30, 4}, DmrsConfig::with_symbols(1, 2, 2), {8}), ConfigError);
    CHECK_THROWS_AS(build_grid({30, 3}, DmrsConfig::with_symbols(1, 2, 2), {2}), ConfigError);
    CHECK_THROWS_AS(build_grid({60, 4}, DmrsConfig::with_symbols(1, 2, 2), {2}), ConfigError);
    CHECK_THROWS_AS(build_grid({30, 4}, DmrsConfig::with_symbols(1, 2, 3), {2}), ConfigError);
    DmrsConfig bad = DmrsConfig::with_symbols(1, 2, 2);
    bad.symbol_indices = {11, 2};
    CHECK_THROWS_AS(build_grid({30, 4}, bad, {2}), ConfigError);
    bad.symbol_indices = {2, 14};
    CHECK_THROWS_AS(build_grid({30, 4}, bad, {2}), ConfigError);
    CHECK_THROWS_AS(build_grid({30, 4}, DmrsConfig::with_symbols(3, 2, 2), {2}), ConfigError);
    CHECK_THROWS_AS(build_grid({30, 4}, DmrsConfig::with_symbols(1, 2, 2), {3}), ConfigError);
}

TEST_CASE("default dmrs positions")
{
    CHECK(DmrsConfig::default_symbol_indices(2) == std::vector<int>{2, 11});
    CHECK(DmrsConfig::default_symbol_indices(3) == std::vector<int>{2, 7, 11});
    CHECK(DmrsConfig::default_symbol_indices(4) == std::vector<int>{2, 5, 8, 11});
}

TEST_CASE("gold sequence matches an independent register model")
{
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const auto c = static_cast<std::uint32_t>(rng() & 0x7fffffffu);
        CHECK(gold_sequence(c, 200) == gold_reference(c, 200));
    }
}

TEST_CASE("gold sequence is deterministic and streams")
{
    CHECK(gold_sequence(1234, 100) == gold_sequence(1234, 100));
    const auto a = gold_sequence(77, 64);
    const auto b = gold_sequence(77, 31);
    CHECK(std::equal(b.begin(), b.end(), a.begin()));
}

TEST_CASE("distinct seeds give distinct gold prefixes")
{
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto c1 = static_cast<std::uint32_t>(rng() & 0x7fffffffu);
        auto c2 = static_cast<std::uint32_t>(rng() & 0x7fffffffu);
        if (c2 == c1)
            c2 ^= 1u;
        const auto a = gold_sequence(c1, 64);
        const auto b = gold_sequence(c2, 64);
        int differing = 0;
        for (std::size_t k = 0; k < 64; ++k)
            differing += a[k] != b[k];
        CHECK(differing >= 1);
    }
}

TEST_CASE("pilot count for type 1, two symbols, four RBs")
{
    const auto g = layout_for(4, 2);
    // 6 comb tones per RB per symbol.
    int expected = 0;
    for (int f = 0; f < g.n_subcarriers(); ++f)
        expected += (f % 2 == 0) ? 2 : 0;
    CHECK(expected == 48);
    CHECK(g.mask.pilot_count() == 48);
    const auto x = dmrs_symbols(g.dmrs, g);
    for (int p = 0; p < 2; ++p) {
        int nz = 0;
        for (int f = 0; f < g.n_subcarriers(); ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t)
                nz += std::abs(x(p, f, t)) > 0;
        CHECK(nz == 48);
    }
}

TEST_CASE("mask density and support")
{
    for (int type : {1, 2})
        for (int n_dmrs : {2, 3, 4}) {
            const auto g = layout_for(9, 4, type, n_dmrs);
            const std::set<int> syms(g.dmrs.symbol_indices.begin(), g.dmrs.symbol_indices.end());
            for (int rb = 0; rb < 9; ++rb)
                for (int t = 0; t < kSymbolsPerSlot; ++t) {
                    int count = 0;
                    for (int f = rb * 12; f < rb * 12 + 12; ++f) {
                        const auto v = g.mask.mask[static_cast<std::size_t>(f) * kSymbolsPerSlot + t];
                        REQUIRE((v == 0 || v == 1));
                        count += v;
                    }
                    if (syms.count(t))
                        CHECK(count == (type == 1 ? 6 : 4));
                    else
                        CHECK(count == 0);
                }
            // Pairs cover each pilot tone exactly once.
            std::vector<int> seen(static_cast<std::size_t>(g.n_subcarriers()), 0);
            for (const auto& p : g.mask.occ_pairs) {
                ++seen[static_cast<std::size_t>(p.first)];
                ++seen[static_cast<std::size_t>(p.second)];
            }
            for (int f = 0; f < g.n_subcarriers(); ++f)
                CHECK(seen[static_cast<std::size_t>(f)] == (g.mask.at(f, g.dmrs.symbol_indices[0]) ? 1 : 0));
        }
}

TEST_CASE("pilots are unit modulus QPSK with OCC signs")
{
    for (int type : {1, 2}) {
        const auto g = layout_for(8, 2, type, 3);
        const auto x = dmrs_symbols(g.dmrs, g);
        for (int f = 0; f < g.n_subcarriers(); ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t)
                for (int p = 0; p < 2; ++p) {
                    if (g.mask.at(f, t)) {
                        CHECK(std::norm(x(p, f, t)) == doctest::Approx(1.0).epsilon(1e-12));
                        CHECK(std::abs(std::abs(x(p, f, t).real()) - std::sqrt(0.5)) < 1e-12);
                    } else {
                        CHECK(x(p, f, t) == cplx{});
                    }
                }
        for (int t : g.dmrs.symbol_indices)
            for (const auto& pr : g.mask.occ_pairs) {
                // Port 1 over port 0 ratio: +1 on the first tone, -1 on the second.
                CHECK(std::abs(x(1, pr.first, t) / x(0, pr.first, t) - 1.0) < 1e-12);
                CHECK(std::abs(x(1, pr.second, t) / x(0, pr.second, t) + 1.0) < 1e-12);
            }
    }
}

TEST_CASE("grid and pilots are deterministic")
{
    const auto a = layout_for(17, 4, 2, 4);
    const auto b = layout_for(17, 4, 2, 4);
    CHECK(a.mask.mask == b.mask.mask);
    CHECK(dmrs_symbols(a.dmrs, a) == dmrs_symbols(b.dmrs, b));
    DmrsConfig other = a.dmrs;
    other.seed = 9;
    CHECK_FALSE(dmrs_symbols(other, a) == dmrs_symbols(a.dmrs, a));
}

TEST_CASE("layer permutation")
{
    const auto g = layout_for(4, 2);
    const auto x = dmrs_symbols(g.dmrs, g);
    const std::vector<int> id{0, 1}, swap{1, 0};
    CHECK(permute_layers(x, id) == x);
    CHECK(permute_layers(permute_layers(x, swap), swap) == x);
    CHECK(permute_layers(permute_layers(x, swap), inverse_permutation(swap)) == x);
    const auto s = permute_layers(x, swap);
    CHECK(s(0, 0, 2) == x(1, 0, 2));
    const std::vector<int> short_perm{0};
    CHECK_THROWS_AS(permute_layers(x, short_perm), std::invalid_argument);
    const std::vector<int> dup{0, 0};
    CHECK_THROWS_AS(permute_layers(x, dup), std::invalid_argument);
}

TEST_CASE("prg lookup by subcarrier")
{
    const auto g = layout_for(7, 4);
    CHECK(g.n_prg() == 2);
    CHECK(g.prg_of_subcarrier(0) == 0);
    CHECK(g.prg_of_subcarrier(47) == 0);
    CHECK(g.prg_of_subcarrier(48) == 1);
    CHECK(g.prg_of_subcarrier(83) == 1);
    CHECK(layout_for(7, PrgConfig::kWideband).tile_rb() == 7);
}
