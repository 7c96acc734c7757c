#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "muse/config.hpp"
#include "muse/envs/observation.hpp"
#include "muse/model.hpp"
#include "muse/rng.hpp"

namespace muse {

enum class AdapterKind { RawFusion, RawFusionDropout, VaeLatent, MvaeLatent, MuseLatent };

AdapterKind parse_adapter_kind(std::string_view name);
std::string_view adapter_kind_name(AdapterKind kind) noexcept;
bool adapter_needs_model(AdapterKind kind) noexcept;

/// Per-dimension affine standardization (x - shift) / scale. Empty means
/// identity.
struct FeatureScaler {
    std::vector<double> shift;
    std::vector<double> scale;

    bool identity() const noexcept { return shift.empty(); }
    /// Mean and standard deviation per column (sd floored at 1e-6).
    static FeatureScaler fit(const Tensor& data);
    std::vector<double> apply(std::span<const double> x) const;
    void apply_rows(Tensor& data) const;

    Config to_config(const std::string& prefix) const;
    static FeatureScaler from_config(const Config& cfg, const std::string& prefix);
    bool operator==(const FeatureScaler&) const = default;
};

/// Maps environment observations to the vector seen by a policy.
struct ObservationAdapter {
    AdapterKind kind = AdapterKind::RawFusion;
    /// Frozen representation model (latent kinds).
    std::shared_ptr<const MuseModel> model;
    /// Applied to the sound vector before anything else, for every kind.
    FeatureScaler sound_scaler;
    double dropout = 0.2;
    std::size_t image_dim = 0;
    std::size_t sound_dim = 0;

    /// Throws ContractError for a latent kind without a model, or a model of
    /// the wrong family or dimensions.
    void validate() const;
    std::size_t output_dim() const;
};

/// Latent kinds: deterministic codes of the available modalities, fused by
/// the model (PoE with the prior, or zero-imputed fusion encoder), posterior
/// mean of z_pi. Raw kinds: image and scaled sound concatenated with zeros
/// for unavailable blocks. With `training_rng`, raw_fusion_dropout also
/// zeroes each block independently with the dropout probability.
std::vector<double> latent_observation(const ObservationAdapter& adapter, const Observation& obs,
                                       Rng* training_rng = nullptr);

}  // namespace muse
