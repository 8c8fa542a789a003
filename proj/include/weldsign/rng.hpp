#pragma once

#include <cmath>
#include <cstdint>

namespace weldsign {

/// Portable xorshift64* generator. Every stochastic component in the project
/// (weight init, data synthesis, shuffling) draws from this so that results
/// are bit-identical across platforms; std::mt19937 / rand() are never used.
class XorShift64Star {
public:
    explicit XorShift64Star(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) { return lo + static_cast<float>(next_unit()) * (hi - lo); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    /// Standard normal via Box-Muller (pairs cached).
    float gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = static_cast<float>(r * std::sin(a));
        have_cached_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    /// Knuth's product method; fine for the small rates used here.
    int poisson(double lambda) {
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_unit();
        } while (p > limit);
        return k - 1;
    }

    /// Derive an independent stream for element `index` of a dataset.
    static uint64_t substream(uint64_t seed, uint64_t index) {
        // splitmix64 finalizer over (seed, index)
        uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
    float cached_ = 0.0f;
    bool have_cached_ = false;
};

}  // namespace weldsign
