#include "muse/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "muse/errors.hpp"
#include "muse/param_store.hpp"
#include "muse/rng.hpp"

namespace muse {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
           (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::size_t IdxTensor::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ParseError("IDX header truncated", bytes.size());
    IdxTensor idx;
    idx.magic = read_be32(bytes, 0);
    if ((idx.magic >> 16) != 0) throw ParseError("bad IDX magic: upper bytes must be zero", 0);
    if (idx.type_code() != 0x08)
        throw ParseError("unsupported IDX type code " + std::to_string(idx.type_code()) + " (only 0x08)", 2);
    const std::size_t rank = idx.magic & 0xff;
    if (rank == 0) throw ParseError("IDX rank must be positive", 3);
    std::size_t pos = 4;
    for (std::size_t i = 0; i < rank; ++i) {
        if (bytes.size() < pos + 4) throw ParseError("IDX dimension list truncated", pos);
        idx.dims.push_back(read_be32(bytes, pos));
        pos += 4;
    }
    const std::size_t count = idx.element_count();
    if (bytes.size() - pos < count)
        throw ParseError("IDX payload truncated: expected " + std::to_string(count) + " bytes, found " +
                             std::to_string(bytes.size() - pos),
                         bytes.size());
    if (bytes.size() - pos > count) throw ParseError("trailing bytes after IDX payload", pos + count);
    idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return idx;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& idx) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * idx.dims.size() + idx.payload.size());
    put_be32(out, idx.magic);
    for (auto d : idx.dims) put_be32(out, d);
    out.insert(out.end(), idx.payload.begin(), idx.payload.end());
    return out;
}

IdxTensor read_idx_file(const std::filesystem::path& path) { return parse_idx(read_file_bytes(path)); }

std::size_t MultimodalDataset::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw ContractError("dataset has no modality '" + name + "'");
}

MultimodalDataset MultimodalDataset::subset(std::span<const std::size_t> indices) const {
    MultimodalDataset out;
    out.names = names;
    out.split = split;
    for (const auto& t : data) out.data.push_back(t.gather_rows(indices));
    for (auto i : indices) {
        if (!labels.empty()) out.labels.push_back(labels.at(i));
        if (!angles.empty()) out.angles.push_back(angles.at(i));
    }
    return out;
}

MultimodalDataset MultimodalDataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(idx);
}

void MultimodalDataset::validate() const {
    if (data.empty() || names.size() != data.size()) throw ContractError("dataset modalities and names disagree");
    for (const auto& t : data)
        if (t.rank() != 2 || t.rows() != size()) throw ContractError("dataset modalities have unequal sample counts");
    if (!labels.empty() && labels.size() != size()) throw ContractError("label count differs from sample count");
    if (!angles.empty() && angles.size() != size()) throw ContractError("angle count differs from sample count");
}

bool MultimodalSample::fully_available() const {
    return std::all_of(available.begin(), available.end(), [](bool b) { return b; });
}

MultimodalDataset load_mnist_pair(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                                  std::size_t limit, const std::string& split) {
    const IdxTensor images = read_idx_file(image_path);
    const IdxTensor labels = read_idx_file(label_path);
    if (images.magic != 0x00000803) throw ParseError("image file is not a rank-3 unsigned-byte IDX", 0);
    if (labels.magic != 0x00000801) throw ParseError("label file is not a rank-1 unsigned-byte IDX", 0);
    if (images.dims[0] != labels.dims[0])
        throw ContractError("image/label count mismatch: " + std::to_string(images.dims[0]) + " vs " +
                            std::to_string(labels.dims[0]));
    std::size_t n = images.dims[0];
    if (limit != 0) n = std::min<std::size_t>(n, limit);
    const std::size_t pixels = static_cast<std::size_t>(images.dims[1]) * images.dims[2];

    MultimodalDataset ds;
    ds.split = split;
    ds.names = {"image", "label"};
    Tensor img({n, pixels});
    Tensor lab({n, 10}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) img.at(i, p) = images.payload[i * pixels + p] / 255.0;
        const int y = labels.payload[i];
        if (y > 9) throw ParseError("label out of range", 8 + i);
        lab.at(i, static_cast<std::size_t>(y)) = 1.0;
        ds.labels.push_back(y);
    }
    ds.data = {std::move(img), std::move(lab)};
    return ds;
}

std::vector<double> render_bar(std::size_t image_size, double theta) {
    const double s = static_cast<double>(image_size);
    const double centre = (s - 1.0) / 2.0;
    const double half_length = 0.42 * s;
    const double half_width = 0.75;
    const double ux = std::cos(theta), uy = std::sin(theta);
    std::vector<double> img(image_size * image_size, 0.0);
    for (std::size_t r = 0; r < image_size; ++r) {
        for (std::size_t c = 0; c < image_size; ++c) {
            const double x = static_cast<double>(c) - centre;
            const double y = centre - static_cast<double>(r);
            const double along = std::clamp(x * ux + y * uy, -half_length, half_length);
            const double dx = x - along * ux, dy = y - along * uy;
            const double d = std::sqrt(dx * dx + dy * dy);
            img[r * image_size + c] = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        }
    }
    return img;
}

double estimate_bar_angle(std::span<const double> image, std::size_t image_size) {
    const double centre = (static_cast<double>(image_size) - 1.0) / 2.0;
    double m = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < image_size; ++r)
        for (std::size_t c = 0; c < image_size; ++c) {
            const double w = std::max(0.0, image[r * image_size + c]);
            m += w;
            mx += w * (static_cast<double>(c) - centre);
            my += w * (centre - static_cast<double>(r));
        }
    if (m <= 0.0) return 0.0;
    mx /= m;
    my /= m;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t r = 0; r < image_size; ++r)
        for (std::size_t c = 0; c < image_size; ++c) {
            const double w = std::max(0.0, image[r * image_size + c]);
            const double x = static_cast<double>(c) - centre - mx;
            const double y = centre - static_cast<double>(r) - my;
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
        }
    double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    if (theta < 0.0) theta += std::numbers::pi;
    if (theta >= std::numbers::pi) theta -= std::numbers::pi;
    return theta;
}

MultimodalDataset make_synthetic_bars(std::size_t count, std::size_t image_size, double noise_sd, std::uint64_t seed) {
    if (image_size < 8) throw ContractError("make_synthetic_bars: image_size must be at least 8");
    if (count == 0) throw ContractError("make_synthetic_bars: count must be positive");
    Rng rng = Rng(seed).split("synthetic-bars");
    MultimodalDataset ds;
    ds.names = {"image", "angle"};
    const std::size_t pixels = image_size * image_size;
    Tensor img({count, pixels});
    Tensor ang({count, 2});
    for (std::size_t i = 0; i < count; ++i) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const auto bar = render_bar(image_size, theta);
        std::copy(bar.begin(), bar.end(), img.row_span(i).begin());
        ang.at(i, 0) = std::cos(2.0 * theta) + noise_sd * rng.normal();
        ang.at(i, 1) = std::sin(2.0 * theta) + noise_sd * rng.normal();
        ds.angles.push_back(theta);
    }
    ds.data = {std::move(img), std::move(ang)};
    return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                    bool shuffle) {
    if (batch_size == 0) throw ContractError("batch_size must be at least 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng = Rng(shuffle_seed).split("shuffle");
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return out;
}

MultimodalSample gather(const MultimodalDataset& dataset, std::span<const std::size_t> indices) {
    MultimodalSample s;
    for (const auto& t : dataset.data) s.data.push_back(t.gather_rows(indices));
    s.available.assign(dataset.data.size(), true);
    return s;
}

std::vector<MultimodalSample> batch_iter(const MultimodalDataset& dataset, std::size_t batch_size,
                                         std::uint64_t shuffle_seed, bool shuffle) {
    std::vector<MultimodalSample> out;
    for (const auto& idx : batch_indices(dataset.size(), batch_size, shuffle_seed, shuffle))
        out.push_back(gather(dataset, idx));
    return out;
}

MultimodalSample full_sample(const MultimodalDataset& dataset) {
    MultimodalSample s;
    s.data = dataset.data;
    s.available.assign(dataset.data.size(), true);
    return s;
}

}  // namespace muse
