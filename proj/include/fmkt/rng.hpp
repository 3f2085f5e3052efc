#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fmkt {

// SplitMix64 generator. Used everywhere instead of <random> so that runs are
// reproducible bit-for-bit across standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without a cached spare, so state is a single u64.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Unbiased integer in [0, n) via rejection sampling.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates over indices [0, n).
    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        for (size_t i = n; i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // Deterministic stream derivation (config seed + stream id -> child seed).
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        Rng r(seed ^ (0x517cc1b727220a95ULL * (stream + 1)));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

}  // namespace fmkt
