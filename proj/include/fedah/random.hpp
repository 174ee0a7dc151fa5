#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedah {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

/// splitmix64 finalizer; a bijective mixer over 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a path of
/// coordinates, e.g. derive_seed(master, {round, client, phase}). Each
/// coordinate is folded in with mix64, so distinct paths give unrelated
/// seeds and the same path always gives the same seed.
inline Seed derive_seed(Seed master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(master);
    for (std::uint64_t part : path) {
        h = mix64(h ^ mix64(part + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Rng make_rng(Seed seed) { return Rng(seed); }

/// Uniform real in [0, 1) using the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace fedah
