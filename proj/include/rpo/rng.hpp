#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rpo {

// std::normal_distribution is implementation-defined, so sampling goes through
// these helpers to keep seeded runs reproducible across standard libraries.

/// Uniform double in [0, 1).
inline double uniform01(std::mt19937_64& rng) {
    return (rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (one sample per call, second discarded).
inline double normal_sample(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Derive an independent stream seed from a master seed and a stream index.
/// SplitMix64 finalizer; distinct (seed, stream) pairs map to distinct states.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace rpo
