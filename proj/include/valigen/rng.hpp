#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace valigen {

/// One splitmix64 output step applied to an arbitrary 64-bit value.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Purpose constants for sub-seed derivation: sub = splitmix64(base ^ purpose).
namespace purpose {
inline constexpr std::uint64_t kSplit = 0x5350'4C49'5400'0001ULL;
inline constexpr std::uint64_t kAugment = 0x4155'474D'0000'0002ULL;
inline constexpr std::uint64_t kTexture = 0x5445'5854'0000'0003ULL;
inline constexpr std::uint64_t kStub = 0x5354'5542'0000'0004ULL;
inline constexpr std::uint64_t kLoop = 0x4C4F'4F50'0000'0005ULL;
inline constexpr std::uint64_t kEval = 0x4556'414C'0000'0006ULL;
}  // namespace purpose

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose_constant) noexcept {
    return splitmix64(base ^ purpose_constant);
}

/// Order-sensitive combination of a seed with further integer coordinates.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) noexcept {
    return splitmix64(seed ^ splitmix64(value));
}

/// Sequential splitmix64 stream. Every seeded draw in the engine goes through
/// this type so results are reproducible across platforms and standard
/// libraries (std distributions are implementation-defined).
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi]; returns lo exactly when the interval is degenerate.
    double uniform(double lo, double hi) noexcept {
        const double u = uniform();
        return lo == hi ? lo : lo + (hi - lo) * u;
    }

    /// Unbiased integer in [0, n) by rejection; n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n + 1) % n;
        std::uint64_t x = next();
        while (x > limit) x = next();
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace valigen
