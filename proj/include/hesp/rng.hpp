#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hesp {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives a sub-seed from a parent seed and a key, e.g. (seed, replicate).
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept {
    return mix64(mix64(seed) ^ (key * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL));
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key1,
                                                  std::uint64_t key2) noexcept {
    return derive_seed(derive_seed(seed, key1), key2);
}

/// Counter-based random stream.
///
/// The n-th output is a pure function of (key, n), so a stream keyed by
/// (seed, replicate, unit) produces the same numbers no matter which thread
/// consumes it or in which order replicates run.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}
    constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(derive_seed(seed, stream)) {}

    [[nodiscard]] constexpr std::uint64_t next_u64() noexcept {
        return mix64(key_ ^ mix64(counter_++));
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    [[nodiscard]] constexpr double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    [[nodiscard]] constexpr double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    [[nodiscard]] double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    [[nodiscard]] bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hesp
