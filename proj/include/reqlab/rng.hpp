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

#include <cstdint>
#include <random>

namespace reqlab {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent child seeds from one master seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named child streams so call sites never collide.
enum class SeedStream : std::uint64_t {
    channel = 1,
    precoder = 2,
    noise = 3,
    pilots = 4,
    augment = 5,
    scenario = 6,
    init = 7,
    validation = 8,
    batch = 9,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, SeedStream stream)
{
    return derive_seed(base, static_cast<std::uint64_t>(stream));
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace reqlab
