#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace photodyn {

/// Seedable random source with reproducible stream splitting.
///
/// Engine: std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Stream `s` of seed `x` is seeded with
/// std::seed_seq{lo32(x), hi32(x), lo32(s), hi32(s)}; seed_seq's mixing is
/// also standard-specified, so every platform reproduces the same draws.
/// Uniform and exponential variates are derived here rather than through
/// <random> distributions, whose algorithms are implementation-defined.
class RandomStream {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64+seed_seq(seed,stream)/v1";

    RandomStream(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exponential waiting time with the given rate (mean 1/rate).
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Standard normal (Box-Muller, one value per call).
    double normal() {
        const double r = std::sqrt(-2.0 * std::log1p(-uniform()));
        return r * std::cos(6.283185307179586 * uniform());
    }

    /// Gamma(shape, rate): the sum of `shape` exponentials when shape is a
    /// small integer, Marsaglia-Tsang otherwise (shape >= 1).
    double gamma(double shape, double rate) {
        if (shape <= 8.0 && shape == std::floor(shape)) {
            // one log of a product of uniforms; 8 factors of >= 2^-53 cannot underflow
            double prod = 1.0;
            for (int i = 0; i < static_cast<int>(shape); ++i) prod *= 1.0 - uniform();
            return -std::log(prod) / rate;
        }
        const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            const double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = 1.0 - uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x || std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
                return d * v / rate;
            }
        }
    }

    /// Trials up to and including the first success (>= 1), as a double so
    /// tiny p cannot overflow.
    double geometric(double p) {
        if (p >= 1.0) return 1.0;
        return 1.0 + std::floor(std::log1p(-uniform()) / std::log1p(-p));
    }

    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace photodyn
