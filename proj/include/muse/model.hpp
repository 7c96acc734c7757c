#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muse/autodiff.hpp"
#include "muse/config.hpp"
#include "muse/datasets.hpp"
#include "muse/gaussian.hpp"
#include "muse/nn.hpp"
#include "muse/param_store.hpp"
#include "muse/rng.hpp"

namespace muse {

enum class LikelihoodKind { Bernoulli, Categorical, Gaussian };
enum class Variant { Muse, MuseH, MuseA, FlatMvae, FusionVae };

LikelihoodKind parse_likelihood(std::string_view name);
std::string_view likelihood_name(LikelihoodKind kind) noexcept;
Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v) noexcept;

struct ModalitySpec {
    std::string name;
    std::size_t data_dim = 0;
    LikelihoodKind likelihood = LikelihoodKind::Bernoulli;
    std::size_t latent_dim = 0;
    double lambda = 1.0;
    double alpha = 1.0;
    double gamma = 10.0;
    std::vector<std::size_t> encoder_hidden{128, 128};
    std::vector<std::size_t> decoder_hidden{128, 128};
    Activation activation = Activation::Swish;

    void validate() const;
    bool operator==(const ModalitySpec&) const = default;
};

struct ModelConfig {
    std::vector<ModalitySpec> modalities;
    std::size_t top_latent_dim = 10;
    double beta = 1.0;
    double delta = 1.0;
    Variant variant = Variant::Muse;
    std::vector<std::size_t> top_hidden{128, 128};
    Activation top_activation = Activation::Relu;
    /// Seed of the parameter initialization.
    std::uint64_t seed = 0;

    std::size_t modality_index(const std::string& name) const;
    void validate() const;
    /// Key = value form written next to checkpoints.
    Config to_config() const;
    static ModelConfig from_config(const Config& cfg);
    bool operator==(const ModelConfig&) const = default;
};

/// Parameters plus the configuration that fixes their layout.
///
/// Parameter names (all keyed by modality name so that reordering the
/// modalities does not change the model):
///   muse, muse_a:     bottom.<m>.enc/dec, top.<m>.enc/dec
///   muse_h, flat_mvae: top.<m>.enc (data -> expert), top.<m>.dec (z -> data)
///   fusion_vae:       fusion.enc (concatenated data), fusion.<m>.dec
/// Encoders emit [mean | logvar] in one final layer.
struct MuseModel {
    ModelConfig config;
    ParamStore params;

    const ModalitySpec& spec(std::size_t m) const { return config.modalities.at(m); }
    std::size_t modality_count() const noexcept { return config.modalities.size(); }
    bool hierarchical() const noexcept {
        return config.variant == Variant::Muse || config.variant == Variant::MuseA;
    }
    /// Width of the code c_m fed to the top experts: the bottom latent for
    /// hierarchical variants, the raw data otherwise.
    std::size_t code_dim(std::size_t m) const;
};

/// Builds a model with freshly initialized parameters. muse_a forces
/// delta to 0. Throws ContractError for an invalid configuration.
MuseModel build_variant(Variant kind, ModelConfig config);
MuseModel build_variant(const std::string& kind, ModelConfig config);

/// Preset configurations at desk scale.
ModelConfig synthetic_model_config(std::size_t image_size);
ModelConfig mnist_model_config();
ModelConfig pendulum_model_config(std::size_t image_pixels, std::size_t sound_dim);
ModelConfig hyperhot_model_config(std::size_t image_pixels, std::size_t sound_dim);

/// Row-wise batch of diagonal Gaussians ([B, D] mean and logvar).
struct GaussianBatch {
    Tensor mean;
    Tensor logvar;

    std::size_t rows() const { return mean.rows(); }
    std::size_t dim() const { return mean.cols(); }
    DiagGaussian row(std::size_t r) const;
};

/// Graph-building view of a model: binds parameters into one graph and
/// provides the network pieces. Parameters appear as trainable leaves.
class ModelGraph {
public:
    explicit ModelGraph(const MuseModel& model, GraphOptions options = {});

    Graph& graph() noexcept { return graph_; }
    ParamBinder& params() noexcept { return binder_; }
    const MuseModel& model() const noexcept { return model_; }

    Var input(const Tensor& t) { return graph_.constant(t); }

    /// q(z_m | x_m) of the bottom level (hierarchical variants only).
    GaussianVar bottom_encode(std::size_t m, Var x);
    /// Bottom decoder output: logits (Bernoulli/categorical) or mean.
    Var bottom_decode(std::size_t m, Var z);
    /// Top-level expert q(z_pi | c_m).
    GaussianVar expert(std::size_t m, Var code);
    /// Top decoder output: code mean for hierarchical variants, data-space
    /// logits/mean for muse_h and flat_mvae.
    Var top_decode(std::size_t m, Var z);
    /// fusion_vae encoder over the concatenation of every modality.
    GaussianVar fusion_encode(const std::vector<Var>& blocks);
    Var fusion_decode(std::size_t m, Var z);
    /// Data-space output of modality m generated from z_pi, through both
    /// levels where the model has two (the code is decoded deterministically).
    Var decode_to_data(std::size_t m, Var z_pi);
    /// q(z_pi | available codes) as a product of experts with the prior.
    GaussianVar posterior(const std::map<std::size_t, Var>& codes, std::size_t rows);

private:
    const MuseModel& model_;
    Graph graph_;
    ParamBinder binder_;
};

/// Per-datum negative log-likelihood [B, 1] of data x under a decoder
/// output. Bernoulli uses logits (cross-entropy on intensities in [0, 1]),
/// categorical uses logits (one-hot targets), Gaussian has unit variance
/// and includes the normalizing constant.
Var negative_log_likelihood(LikelihoodKind kind, Var output, Var x);
/// Decoder output mapped to data space: probabilities or the mean.
Tensor output_mean(LikelihoodKind kind, const Tensor& output);
double negative_log_likelihood_value(LikelihoodKind kind, std::span<const double> output, std::span<const double> x);

GaussianBatch encode_modality(const MuseModel& model, std::size_t m, const Tensor& x);
/// Checks the availability mask first.
GaussianBatch encode_modality(const MuseModel& model, const MultimodalSample& sample, std::size_t m);

enum class CodeMode { Deterministic, Sampled };
/// c_m: the posterior mean (deterministic) or mean + sd * noise (sampled).
/// For non-hierarchical variants the code is the data itself.
Tensor code_of(const MuseModel& model, std::size_t m, const Tensor& x, CodeMode mode, const Tensor* noise = nullptr);

/// q(z_pi | codes of the available subset), prior included. An empty
/// subset returns the prior. For fusion_vae the codes are data blocks and
/// missing blocks are zero-imputed.
GaussianBatch encode_multimodal(const MuseModel& model, const std::map<std::size_t, Tensor>& codes, std::size_t rows);
/// Deterministic codes of the available modalities, then encode_multimodal.
GaussianBatch encode_sample(const MuseModel& model, const MultimodalSample& sample);

struct LossBreakdown {
    double bottom = 0.0;
    double top = 0.0;
    double alma = 0.0;
    double total = 0.0;
    /// Number of ELBO-style summands (flat_mvae: joint + singletons).
    std::size_t elbo_summands = 0;
    std::size_t clamp_events = 0;
};

/// Loss graph of one batch. `bottom`, `top`, `alma` and `total` are [1, 1]
/// nodes; terms absent for a variant are constant zeros.
struct LossGraph {
    Var bottom;
    Var top;
    Var alma;
    Var total;
    std::size_t elbo_summands = 0;
    /// Stop-gradient codes c_m shared by the top loss and ALMA.
    std::vector<Var> codes;
};

/// Builds every loss term with a single set of sampled codes. Noise streams
/// are split from `rng` by modality name ("bottom/<name>", "top/joint",
/// "top/single/<name>").
LossGraph build_loss(ModelGraph& mg, const MultimodalSample& batch, const Rng& rng);
LossBreakdown evaluate_loss(const MuseModel& model, const MultimodalSample& batch, const Rng& rng);

/// Non-empty strict subsets of {0..M-1} as bit masks, in increasing order.
std::vector<std::uint32_t> alma_subsets(std::size_t modality_count);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

struct EpochLog {
    std::size_t epoch = 0;
    double bottom = 0.0;
    double top = 0.0;
    double alma = 0.0;
    double total = 0.0;
};

struct TrainLog {
    /// Entry 0 is the untrained model's loss; entry e >= 1 is the mean
    /// training loss over the batches of epoch e.
    std::vector<EpochLog> epochs;
    bool diverged = false;
    std::string divergence;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam minimization of the total loss. On a non-finite loss the
/// parameters are restored to the end of the last completed epoch and the
/// log reports the divergence.
TrainLog fit(MuseModel& model, const MultimodalDataset& dataset, const TrainConfig& config,
             const EpochCallback& on_epoch = {});

enum class GenerateMode { Mean, Sample };
/// Cross-modal generation: deterministic codes of the sources, PoE
/// posterior, z_pi mean (or one sample), decoded to the target's data
/// space. Returns probabilities (Bernoulli, categorical) or means.
Tensor cross_modal_generate(const MuseModel& model, const std::map<std::size_t, Tensor>& sources, std::size_t target,
                            GenerateMode mode = GenerateMode::Mean, Rng* rng = nullptr);
/// Decode `count` prior samples of z_pi into the target modality.
Tensor prior_sample(const MuseModel& model, std::size_t target, std::size_t count, Rng& rng);

/// Checkpoint = ParamStore container at `path` plus a key = value sidecar
/// at `path` + ".cfg".
void save_checkpoint(const MuseModel& model, const std::filesystem::path& path);
/// Throws ArtifactMismatch when the parameters do not match the layout
/// the sidecar describes, or (with `expected`) when the sidecar differs
/// from the expected configuration.
MuseModel load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace muse
