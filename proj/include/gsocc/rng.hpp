#pragma once

#include <cmath>
#include <cstdint>

namespace gsocc {

// splitmix64 generator. std::mt19937_64 would do for the raw stream, but the
// standard distributions are implementation-defined, so scene generation and
// anchor init would not reproduce byte-identically across standard libraries.
// All scaling below is fixed-width arithmetic.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant at these ranges.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(uniform_int(
                        static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    // Box-Muller; one cached value so the stream is deterministic.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent deterministic substream (scene retries, per-frame jitter).
    Rng fork(std::uint64_t salt) {
        Rng child(state_ ^ (0xd1342543de82ef95ULL * (salt + 1)));
        child.next_u64();
        return child;
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace gsocc
