#include "muse/rng.hpp"

#include <cmath>
#include <numbers>

namespace muse {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t hash_string(std::string_view s) noexcept {
    // FNV-1a, then mixed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t n = counter_++;
    return mix64(key_ + n * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection for exact uniformity.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

std::vector<double> Rng::normal_vector(std::size_t n) noexcept {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
}

Rng Rng::split(std::uint64_t stream) const noexcept {
    return Rng(mix64(key_ ^ mix64(stream + 0x243f6a8885a308d3ULL)), 0);
}

Rng Rng::split(std::string_view stream) const noexcept { return split(hash_string(stream)); }

}  // namespace muse
