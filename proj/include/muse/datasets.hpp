#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

/// Raw IDX container: big-endian magic and dims, unsigned-byte payload.
struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::uint8_t type_code() const noexcept { return static_cast<std::uint8_t>((magic >> 8) & 0xff); }
    std::size_t element_count() const noexcept;
};

IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& idx);
IdxTensor read_idx_file(const std::filesystem::path& path);

/// Aligned per-modality data, one [count, dim] tensor per modality.
struct MultimodalDataset {
    std::vector<std::string> names;
    std::vector<Tensor> data;
    std::string split = "train";
    /// Class index per sample, when the data carries one (MNIST).
    std::vector<int> labels;
    /// Generating angle per sample for the synthetic bars.
    std::vector<double> angles;

    std::size_t size() const { return data.empty() ? 0 : data.front().rows(); }
    std::size_t modality_count() const noexcept { return data.size(); }
    std::size_t modality_index(const std::string& name) const;
    /// Sub-dataset of the given rows (labels/angles follow).
    MultimodalDataset subset(std::span<const std::size_t> indices) const;
    MultimodalDataset head(std::size_t n) const;
    void validate() const;
};

/// A batch of joint observations plus a per-modality availability flag.
/// Unavailable modalities hold a zero tensor of the right shape.
struct MultimodalSample {
    std::vector<Tensor> data;
    std::vector<bool> available;

    std::size_t rows() const { return data.front().rows(); }
    bool fully_available() const;
};

/// Images scaled to [0, 1] (modality "image", 784 values) and one-hot
/// labels (modality "label", 10 values). `limit` of 0 keeps everything.
MultimodalDataset load_mnist_pair(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                                  std::size_t limit = 0, const std::string& split = "train");

/// Anti-aliased bar through the image centre at angle theta (0 = horizontal,
/// pi/2 = vertical, counter-clockwise with y pointing up).
std::vector<double> render_bar(std::size_t image_size, double theta);
/// Orientation in [0, pi) of an intensity image from its second moments.
double estimate_bar_angle(std::span<const double> image, std::size_t image_size);

/// Modality "image" = bar image, modality "angle" = (cos 2t, sin 2t) + noise.
MultimodalDataset make_synthetic_bars(std::size_t count, std::size_t image_size, double noise_sd, std::uint64_t seed);

/// Batch partition of [0, n): shuffled by seed when `shuffle`, last short
/// batch kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                    bool shuffle = true);
MultimodalSample gather(const MultimodalDataset& dataset, std::span<const std::size_t> indices);
std::vector<MultimodalSample> batch_iter(const MultimodalDataset& dataset, std::size_t batch_size,
                                         std::uint64_t shuffle_seed, bool shuffle = true);
MultimodalSample full_sample(const MultimodalDataset& dataset);

}  // namespace muse
