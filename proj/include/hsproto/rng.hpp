#ifndef HSPROTO_RNG_HPP
#define HSPROTO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hsproto {

// All randomness flows through mt19937_64 plus the explicit draws below.
// std::*_distribution is implementation-defined and would break the
// byte-identical-per-seed contracts, so it is not used anywhere.
using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream from a base seed and a salt.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt));
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a offset
    for (char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ULL;
    }
    return mix_seed(seed, h);
}

// Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant at our sizes.
inline size_t uniform_index(Rng& rng, size_t n) {
    return static_cast<size_t>(rng() % static_cast<uint64_t>(n));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Standard normal via Box-Muller; two uniforms per draw, no cached state.
inline double normal01(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// In-place Fisher-Yates; deterministic across platforms for a given engine state.
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace hsproto

#endif
