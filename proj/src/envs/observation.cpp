#include "muse/envs/observation.hpp"

#include <algorithm>
#include <cmath>

#include "muse/errors.hpp"
#include "muse/param_store.hpp"

namespace muse {

std::array<bool, 2> parse_modality_mask(const std::string& name) {
    if (name == "joint") return {true, true};
    if (name == "image") return {true, false};
    if (name == "sound") return {false, true};
    if (name == "none") return {false, false};
    throw ContractError("unknown modality mask '" + name + "' (expected joint, image, sound or none)");
}

std::string modality_mask_name(std::array<bool, 2> mask) {
    if (mask[0] && mask[1]) return "joint";
    if (mask[0]) return "image";
    if (mask[1]) return "sound";
    return "none";
}

std::vector<std::uint8_t> encode_pgm(std::span<const double> pixels, std::size_t height, std::size_t width) {
    if (pixels.size() != height * width) throw ShapeError("encode_pgm: pixel count does not match dimensions");
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + pixels.size());
    for (double p : pixels) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
    return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
               std::size_t width) {
    write_file_bytes(path, encode_pgm(pixels, height, width));
}

}  // namespace muse
