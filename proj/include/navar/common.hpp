#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace navar {

/// Malformed, missing or inconsistent input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite losses, divergence or explosive simulation. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values. Maps to CLI exit code 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace rng {

/// SplitMix64 finalizer; a stateless bijective mixer on 64-bit words.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based hash of a key tuple. Used for dropout masks so that the
/// drawn bits depend only on (seed, step, net, window, unit) and never on
/// evaluation order or thread count.
[[nodiscard]] constexpr std::uint64_t hash4(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                            std::uint64_t d) noexcept {
    std::uint64_t h = mix64(a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return mix64(h ^ d);
}

/// Sequential generator (SplitMix64 stream). The distribution helpers below
/// are written out explicitly because the std:: distributions are
/// implementation-defined and would break cross-platform reproducibility.
class Stream {
public:
    explicit Stream(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % n;
    }

    /// Standard normal via Box-Muller (one draw per call, spare discarded).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace rng

/// Shortest decimal text that parses back to exactly `v`.
[[nodiscard]] std::string format_double(double v);

/// Fixed scientific notation, used for p-values in human-facing reports.
[[nodiscard]] std::string format_scientific(double v, int digits = 9);

/// FNV-1a over a byte string; used for config hashes in output sidecars.
[[nodiscard]] std::uint64_t fnv1a(const std::string& bytes) noexcept;

[[nodiscard]] std::string hex64(std::uint64_t v);

}  // namespace navar
