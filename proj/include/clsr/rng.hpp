#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace clsr {

// SplitMix64 (Steele, Lea, Flood; public-domain reference constants). Chosen
// over <random> engines because libstdc++ distribution outputs are not pinned
// across implementations, and every sampled value here must be reproducible
// bit-for-bit from the seed alone.
class rng {
  public:
    explicit rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1): top 53 bits scaled by 2^-53.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Unbiased enough for shuffles at this scale (modulo bias < n * 2^-64).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. u1 is shifted into (0, 1] so log() never
    // sees zero; the sine-phase partner of each pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic derivation of independent streams (epoch shuffles, the
// train/validation split) from one user seed. SplitMix64 finalizer over the
// combined words; documented so other implementations can reproduce it.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Fisher-Yates over indices 0..n-1, high index down, driven by next_below.
template <typename Vec>
void shuffle_indices(Vec& v, rng& r) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(r.next_below(i + 1));
        std::swap(v[i], v[j]);
    }
}

} // namespace clsr
