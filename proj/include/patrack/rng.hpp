#pragma once

#include <cmath>
#include <cstdint>

namespace patrack {

/// Deterministic 64-bit PRNG (splitmix64). Identical seed produces an
/// identical stream on every platform, which makes generated datasets,
/// weight initialization, and training batches reproducible bit-for-bit.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (consumes exactly two draws).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Normal truncated to [-2, 2] standard deviations, then scaled.
    double truncated_normal(double stddev) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return stddev * z;
    }

    /// Derive an independent child stream, e.g. per sequence index.
    Rng fork(uint64_t stream_id) {
        Rng mix(state_ ^ (0x6A09E667F3BCC909ULL + stream_id));
        return Rng(mix.next_u64());
    }

  private:
    uint64_t state_;
};

}  // namespace patrack
