#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sf {

// splitmix64, used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from (label, seed [, index]).
// Streams with different labels never collide in practice.
inline std::uint64_t derive_seed(std::string_view label, std::uint64_t seed, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = h;
    s ^= splitmix64(seed);
    std::uint64_t t = s + 0x9e3779b97f4a7c15ULL * (index + 1);
    return splitmix64(t);
}

// Deterministic RNG. The mt19937_64 sequence is fixed by the standard and the
// uniform/normal transforms below are our own, so identical seeds give
// bitwise-identical doubles on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // modulo bias is negligible for n << 2^64 and keeps the draw count fixed
        return engine_() % n;
    }

    // standard normal via Box-Muller (no cached spare; draw count per call is fixed)
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace sf
