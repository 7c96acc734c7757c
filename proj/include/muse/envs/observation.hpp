#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace muse {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const noexcept { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const noexcept { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const noexcept { return {x * s, y * s}; }
    double dot(Vec2 o) const noexcept { return x * o.x + y * o.y; }
    double norm2() const noexcept { return x * x + y * y; }
    double norm() const noexcept { return std::sqrt(norm2()); }
    bool operator==(const Vec2&) const = default;
};

struct SoundReceiver {
    Vec2 position;
    Vec2 velocity;
};

/// Modality order shared by both environments.
inline constexpr std::size_t kImageModality = 0;
inline constexpr std::size_t kSoundModality = 1;

struct Observation {
    /// Row-major grayscale, values in [0, 1], row 0 at the top.
    std::vector<double> image;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> sound;
    std::array<bool, 2> available{true, true};

    bool operator==(const Observation&) const = default;
};

/// Parses masks written as "joint", "image", "sound" or "none".
std::array<bool, 2> parse_modality_mask(const std::string& name);
std::string modality_mask_name(std::array<bool, 2> mask);

/// Binary portable graymap, maxval 255.
std::vector<std::uint8_t> encode_pgm(std::span<const double> pixels, std::size_t height, std::size_t width);
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
               std::size_t width);

}  // namespace muse
