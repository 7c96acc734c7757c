#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "muse/datasets.hpp"
#include "muse/model.hpp"

namespace muse {

struct IwEstimate {
    /// Dataset mean of the per-datum bound, nats per datum.
    double value = 0.0;
    /// Standard error of that mean across data.
    double std_error = 0.0;
    std::size_t num_samples = 0;
    std::size_t count = 0;
};

struct IwOptions {
    std::size_t num_samples = 1000;
    std::uint64_t seed = 0;
    /// Added to every log-weight (stability checks only).
    double log_weight_offset = 0.0;
};

/// logsumexp(w) - log N, stabilized by the maximum.
double log_mean_exp(std::span<const double> log_weights);

/// log p(x_m): z ~ q(z_m | x_m), weight log p(x_m|z) + log p(z) - log q(z|x_m).
/// Non-hierarchical variants use the single-expert posterior over z_pi.
IwEstimate iw_marginal(const MuseModel& model, std::size_t m, const Tensor& data, const IwOptions& options);

/// Joint bound with z_pi ~ q(z_pi | c_1:M). Hierarchical variants evaluate
/// the deterministic codes under the unit-variance code likelihood (code
/// space); the others evaluate the data.
IwEstimate iw_joint(const MuseModel& model, const MultimodalDataset& dataset, const IwOptions& options);

/// log p(x_target | x_sources) with z_pi ~ q(z_pi | c_sources), decoded to
/// data space through both levels.
IwEstimate iw_conditional(const MuseModel& model, std::size_t target, const std::vector<std::size_t>& sources,
                          const MultimodalDataset& dataset, const IwOptions& options);

/// Fraction of rows whose generated categorical target (argmax) matches
/// the argmax of the dataset's one-hot target.
double coherence_accuracy(const MuseModel& model, const std::vector<std::size_t>& sources, std::size_t target,
                          const MultimodalDataset& dataset);

/// Synthetic bars: image generated from the angle modality counts as
/// coherent when its estimated orientation is within pi / (2 * bins) of the
/// true angle (a window one angle bin wide).
double bar_angle_coherence(const MuseModel& model, const MultimodalDataset& dataset, std::size_t bins = 8);

/// Dense softmax classifier used as an independent judge of generated images.
struct Classifier {
    ParamStore params;
    std::vector<std::size_t> sizes;

    std::vector<int> predict(const Tensor& x) const;
    double accuracy(const Tensor& x, const std::vector<int>& labels) const;
};

Classifier train_classifier(const Tensor& x, const std::vector<int>& labels, std::size_t classes,
                            const std::vector<std::size_t>& hidden, std::size_t epochs, std::uint64_t seed);

/// Label -> image generation judged by `judge`: one image per row of the
/// label modality (posterior mean of z_pi).
double cross_generation_accuracy(const MuseModel& model, std::size_t label_modality, std::size_t image_modality,
                                 const MultimodalDataset& dataset, const Classifier& judge);

struct IwRow {
    std::string metric;
    std::string modality;
    std::size_t num_samples = 0;
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t seed = 0;
};

std::string iw_csv(const std::vector<IwRow>& rows);

}  // namespace muse
