#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace muse {

/// Counter-based generator: output n is a bijective mix of (key, n).
///
/// Streams are derived with split(), which hashes a stream id into a new
/// key, so independent consumers never share state. Every stochastic
/// routine in the library takes an Rng by reference; there is no global
/// generator.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (both variates consumed pairwise).
    double normal() noexcept;
    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
    std::vector<double> normal_vector(std::size_t n) noexcept;

    Rng split(std::uint64_t stream) const noexcept;
    Rng split(std::string_view stream) const noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    Rng(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_string(std::string_view s) noexcept;

}  // namespace muse
