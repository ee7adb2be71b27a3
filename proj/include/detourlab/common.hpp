// Shared constants, error types and the seeded random stream used across the
// library. Random draws go through Rng's own bit manipulation rather than
// <random> distributions so that identical seeds give identical trajectories
// on every platform and standard library.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <random>

namespace detourlab {

inline constexpr double kMetersPerMile = 1609.344;
inline constexpr double kSecondsPerHour = 3600.0;

inline double mph_to_mps(double mph) { return mph * kMetersPerMile / kSecondsPerHour; }
inline double mps_to_mph(double mps) { return mps * kSecondsPerHour / kMetersPerMile; }

// Thrown when a config file or a built network is inconsistent.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a caller violates an operation's contract.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Deterministic random stream. mt19937_64 has a fixed specification; the
// uniform mappings below avoid the implementation-defined behaviour of
// std::uniform_real_distribution.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Derive an independent stream; useful for per-episode substreams.
    Rng split(std::uint64_t salt) {
        return Rng(gen_() ^ (salt * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull));
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace detourlab
