// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace vls {

// Deterministic RNG. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard, and every conversion to a distribution is done by
// hand below so draws are identical across platforms and standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, n). n must be > 0. Uses rejection sampling so the
    // result is exactly uniform and platform-independent.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller without the cached spare, one fresh pair of uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    // Geometric on {1, 2, ...} with mean `mean_len` (success prob 1/mean_len),
    // sampled by inversion.
    long geometric(double mean_len) {
        if (mean_len <= 1.0) return 1;
        const double p = 1.0 / mean_len;
        double u = 0.0;
        do {
            u = uniform();
        } while (u == 0.0);
        const long k = 1 + static_cast<long>(std::floor(std::log(u) / std::log(1.0 - p)));
        return k < 1 ? 1 : k;
    }

    // Index drawn from a categorical distribution given by `weights`
    // (non-negative, need not be normalized), by CDF inversion.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        const double r = uniform() * total;
        double cum = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            cum += weights[i];
            if (r < cum) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace vls
