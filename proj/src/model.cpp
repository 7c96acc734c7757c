#include "muse/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "muse/errors.hpp"

namespace muse {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::string enc_prefix(const std::string& level, const std::string& name) { return level + "." + name + ".enc"; }
std::string dec_prefix(const std::string& level, const std::string& name) { return level + "." + name + ".dec"; }

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

Tensor noise_tensor(const Rng& rng, const std::string& stream, std::size_t rows, std::size_t cols) {
    Rng r = rng.split(stream);
    return Tensor({rows, cols}, r.normal_vector(rows * cols));
}

Var zero_scalar(Graph& g) { return g.constant(Tensor({1, 1}, 0.0)); }

void require_modality(const MuseModel& model, std::size_t m) {
    if (m >= model.modality_count())
        throw ContractError("modality index " + std::to_string(m) + " out of range (model has " +
                            std::to_string(model.modality_count()) + ")");
}

void require_shape(const MuseModel& model, std::size_t m, const Tensor& x) {
    require_modality(model, m);
    if (x.rank() != 2 || x.cols() != model.spec(m).data_dim)
        throw ShapeError("modality '" + model.spec(m).name + "' expects [B, " + std::to_string(model.spec(m).data_dim) +
                         "], got " + shape_to_string(x.shape()));
}

GaussianBatch to_batch(const GaussianVar& q) { return {q.mean.value(), q.logvar.value()}; }

GaussianVar split_gaussian(Var out, std::size_t dim) { return {slice(out, 0, dim), slice(out, dim, 2 * dim)}; }

}  // namespace

LikelihoodKind parse_likelihood(std::string_view name) {
    if (name == "bernoulli") return LikelihoodKind::Bernoulli;
    if (name == "categorical") return LikelihoodKind::Categorical;
    if (name == "gaussian") return LikelihoodKind::Gaussian;
    throw ContractError("unknown likelihood '" + std::string(name) + "'");
}

std::string_view likelihood_name(LikelihoodKind kind) noexcept {
    switch (kind) {
        case LikelihoodKind::Bernoulli: return "bernoulli";
        case LikelihoodKind::Categorical: return "categorical";
        case LikelihoodKind::Gaussian: return "gaussian";
    }
    return "bernoulli";
}

Variant parse_variant(std::string_view name) {
    if (name == "muse") return Variant::Muse;
    if (name == "muse_h") return Variant::MuseH;
    if (name == "muse_a") return Variant::MuseA;
    if (name == "flat_mvae") return Variant::FlatMvae;
    if (name == "fusion_vae") return Variant::FusionVae;
    throw ContractError("unknown model variant '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) noexcept {
    switch (v) {
        case Variant::Muse: return "muse";
        case Variant::MuseH: return "muse_h";
        case Variant::MuseA: return "muse_a";
        case Variant::FlatMvae: return "flat_mvae";
        case Variant::FusionVae: return "fusion_vae";
    }
    return "muse";
}

void ModalitySpec::validate() const {
    if (name.empty()) throw ContractError("modality name must not be empty");
    if (data_dim == 0 || latent_dim == 0) throw ContractError("modality '" + name + "': dimensions must be positive");
    for (double w : {lambda, alpha, gamma})
        if (!std::isfinite(w) || w < 0.0) throw ContractError("modality '" + name + "': weights must be finite and >= 0");
    if (likelihood == LikelihoodKind::Categorical && data_dim < 2)
        throw ContractError("modality '" + name + "': categorical needs at least two classes");
    for (auto w : encoder_hidden)
        if (w == 0) throw ContractError("modality '" + name + "': zero-width encoder layer");
    for (auto w : decoder_hidden)
        if (w == 0) throw ContractError("modality '" + name + "': zero-width decoder layer");
}

std::size_t ModelConfig::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i)
        if (modalities[i].name == name) return i;
    throw ContractError("model has no modality '" + name + "'");
}

void ModelConfig::validate() const {
    if (modalities.empty()) throw ContractError("model needs at least one modality");
    if (modalities.size() > 16) throw ContractError("at most 16 modalities are supported");
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        modalities[i].validate();
        for (std::size_t j = 0; j < i; ++j)
            if (modalities[j].name == modalities[i].name)
                throw ContractError("duplicate modality name '" + modalities[i].name + "'");
    }
    if (top_latent_dim == 0) throw ContractError("top_latent_dim must be positive");
    if (!std::isfinite(beta) || beta < 0.0 || !std::isfinite(delta) || delta < 0.0)
        throw ContractError("beta and delta must be finite and >= 0");
    if (variant == Variant::MuseA && delta != 0.0) throw ContractError("muse_a requires delta = 0");
}

Config ModelConfig::to_config() const {
    Config c;
    c.set("model.variant", std::string(variant_name(variant)));
    c.set("model.top_latent_dim", top_latent_dim);
    c.set("model.beta", beta);
    c.set("model.delta", delta);
    c.set("model.top_hidden", top_hidden);
    c.set("model.top_activation", std::string(activation_name(top_activation)));
    c.set("model.seed", std::to_string(seed));
    std::string names;
    for (const auto& m : modalities) names += (names.empty() ? "" : ",") + m.name;
    c.set("model.modalities", names);
    for (const auto& m : modalities) {
        const std::string p = "modality." + m.name + ".";
        c.set(p + "data_dim", m.data_dim);
        c.set(p + "likelihood", std::string(likelihood_name(m.likelihood)));
        c.set(p + "latent_dim", m.latent_dim);
        c.set(p + "lambda", m.lambda);
        c.set(p + "alpha", m.alpha);
        c.set(p + "gamma", m.gamma);
        c.set(p + "encoder_hidden", m.encoder_hidden);
        c.set(p + "decoder_hidden", m.decoder_hidden);
        c.set(p + "activation", std::string(activation_name(m.activation)));
    }
    return c;
}

ModelConfig ModelConfig::from_config(const Config& c) {
    ModelConfig cfg;
    try {
        cfg.variant = parse_variant(c.get_string("model.variant", "muse"));
        cfg.top_latent_dim = c.get_size("model.top_latent_dim", cfg.top_latent_dim);
        cfg.beta = c.get_double("model.beta", cfg.beta);
        cfg.delta = c.get_double("model.delta", cfg.variant == Variant::MuseA ? 0.0 : cfg.delta);
        cfg.top_hidden = c.get_sizes("model.top_hidden", cfg.top_hidden);
        cfg.top_activation = parse_activation(c.get_string("model.top_activation", "relu"));
        cfg.seed = c.get_u64("model.seed", 0);
        for (const auto& name : c.get_list("model.modalities", {})) {
            const std::string p = "modality." + name + ".";
            ModalitySpec m;
            m.name = name;
            m.data_dim = c.get_size(p + "data_dim", 0);
            m.likelihood = parse_likelihood(c.get_string(p + "likelihood", "bernoulli"));
            m.latent_dim = c.get_size(p + "latent_dim", 0);
            m.lambda = c.get_double(p + "lambda", m.lambda);
            m.alpha = c.get_double(p + "alpha", m.alpha);
            m.gamma = c.get_double(p + "gamma", m.gamma);
            m.encoder_hidden = c.get_sizes(p + "encoder_hidden", m.encoder_hidden);
            m.decoder_hidden = c.get_sizes(p + "decoder_hidden", m.decoder_hidden);
            m.activation = parse_activation(c.get_string(p + "activation", "swish"));
            cfg.modalities.push_back(std::move(m));
        }
    } catch (const ContractError& e) {
        throw ConfigError("model", e.what());
    }
    return cfg;
}

std::size_t MuseModel::code_dim(std::size_t m) const {
    return hierarchical() ? spec(m).latent_dim : spec(m).data_dim;
}

MuseModel build_variant(Variant kind, ModelConfig config) {
    config.variant = kind;
    if (kind == Variant::MuseA) config.delta = 0.0;
    config.validate();
    MuseModel model;
    model.config = config;
    const Rng root = Rng(config.seed).split("init");
    auto init = [&](const std::string& prefix, const std::vector<std::size_t>& sizes) {
        Rng r = root.split(prefix);
        init_mlp(model.params, prefix, sizes, r);
    };
    const std::size_t top = config.top_latent_dim;
    switch (kind) {
        case Variant::Muse:
        case Variant::MuseA:
            for (const auto& m : config.modalities) {
                init(enc_prefix("bottom", m.name), layer_sizes(m.data_dim, m.encoder_hidden, 2 * m.latent_dim));
                init(dec_prefix("bottom", m.name), layer_sizes(m.latent_dim, m.decoder_hidden, m.data_dim));
                init(enc_prefix("top", m.name), layer_sizes(m.latent_dim, config.top_hidden, 2 * top));
                init(dec_prefix("top", m.name), layer_sizes(top, config.top_hidden, m.latent_dim));
            }
            break;
        case Variant::MuseH:
        case Variant::FlatMvae:
            for (const auto& m : config.modalities) {
                init(enc_prefix("top", m.name), layer_sizes(m.data_dim, m.encoder_hidden, 2 * top));
                init(dec_prefix("top", m.name), layer_sizes(top, m.decoder_hidden, m.data_dim));
            }
            break;
        case Variant::FusionVae: {
            std::size_t total = 0;
            for (const auto& m : config.modalities) total += m.data_dim;
            init("fusion.enc", layer_sizes(total, config.modalities.front().encoder_hidden, 2 * top));
            for (const auto& m : config.modalities)
                init(dec_prefix("fusion", m.name), layer_sizes(top, m.decoder_hidden, m.data_dim));
            break;
        }
    }
    return model;
}

MuseModel build_variant(const std::string& kind, ModelConfig config) {
    return build_variant(parse_variant(kind), std::move(config));
}

ModelConfig synthetic_model_config(std::size_t image_size) {
    ModelConfig c;
    ModalitySpec image{.name = "image",
                       .data_dim = image_size * image_size,
                       .likelihood = LikelihoodKind::Bernoulli,
                       .latent_dim = 16,
                       .lambda = 1.0,
                       .alpha = 1.0,
                       .gamma = 10.0};
    ModalitySpec angle{.name = "angle",
                       .data_dim = 2,
                       .likelihood = LikelihoodKind::Gaussian,
                       .latent_dim = 4,
                       .lambda = 50.0,
                       .alpha = 1.0,
                       .gamma = 10.0};
    c.modalities = {image, angle};
    c.top_latent_dim = 8;
    return c;
}

ModelConfig mnist_model_config() {
    ModelConfig c;
    ModalitySpec image{.name = "image",
                       .data_dim = 784,
                       .likelihood = LikelihoodKind::Bernoulli,
                       .latent_dim = 50,
                       .lambda = 1.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {512, 512},
                       .decoder_hidden = {512, 512},
                       .activation = Activation::Swish};
    ModalitySpec label{.name = "label",
                       .data_dim = 10,
                       .likelihood = LikelihoodKind::Categorical,
                       .latent_dim = 4,
                       .lambda = 50.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {64, 64},
                       .decoder_hidden = {64, 64, 64},
                       .activation = Activation::Relu};
    c.modalities = {image, label};
    c.top_latent_dim = 10;
    return c;
}

ModelConfig pendulum_model_config(std::size_t image_pixels, std::size_t sound_dim) {
    ModelConfig c;
    ModalitySpec image{.name = "image",
                       .data_dim = image_pixels,
                       .likelihood = LikelihoodKind::Bernoulli,
                       .latent_dim = 16,
                       .lambda = 1.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {256, 128},
                       .decoder_hidden = {128, 256}};
    ModalitySpec sound{.name = "sound",
                       .data_dim = sound_dim,
                       .likelihood = LikelihoodKind::Gaussian,
                       .latent_dim = 8,
                       .lambda = 50.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {64, 64},
                       .decoder_hidden = {64, 64}};
    c.modalities = {image, sound};
    c.top_latent_dim = 10;
    return c;
}

ModelConfig hyperhot_model_config(std::size_t image_pixels, std::size_t sound_dim) {
    ModelConfig c;
    ModalitySpec image{.name = "image",
                       .data_dim = image_pixels,
                       .likelihood = LikelihoodKind::Bernoulli,
                       .latent_dim = 64,
                       .lambda = 1.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {256, 128},
                       .decoder_hidden = {128, 256}};
    ModalitySpec sound{.name = "sound",
                       .data_dim = sound_dim,
                       .likelihood = LikelihoodKind::Gaussian,
                       .latent_dim = 64,
                       .lambda = 50.0,
                       .alpha = 1.0,
                       .gamma = 10.0,
                       .encoder_hidden = {128, 128},
                       .decoder_hidden = {128, 128}};
    c.modalities = {image, sound};
    c.top_latent_dim = 40;
    return c;
}

DiagGaussian GaussianBatch::row(std::size_t r) const {
    const auto m = mean.row_span(r);
    const auto l = logvar.row_span(r);
    return {std::vector<double>(m.begin(), m.end()), std::vector<double>(l.begin(), l.end())};
}

ModelGraph::ModelGraph(const MuseModel& model, GraphOptions options)
    : model_(model), graph_(options), binder_(graph_, model.params) {}

GaussianVar ModelGraph::bottom_encode(std::size_t m, Var x) {
    if (!model_.hierarchical())
        throw ContractError(std::string(variant_name(model_.config.variant)) + " has no bottom-level encoders");
    const auto& s = model_.spec(m);
    Var out = mlp_forward(binder_, enc_prefix("bottom", s.name), x, s.encoder_hidden.size() + 1, s.activation);
    return split_gaussian(out, s.latent_dim);
}

Var ModelGraph::bottom_decode(std::size_t m, Var z) {
    const auto& s = model_.spec(m);
    return mlp_forward(binder_, dec_prefix("bottom", s.name), z, s.decoder_hidden.size() + 1, s.activation);
}

GaussianVar ModelGraph::expert(std::size_t m, Var code) {
    const auto& s = model_.spec(m);
    const auto& cfg = model_.config;
    if (cfg.variant == Variant::FusionVae) throw ContractError("fusion_vae has no per-modality experts");
    Var out = model_.hierarchical()
                  ? mlp_forward(binder_, enc_prefix("top", s.name), code, cfg.top_hidden.size() + 1, cfg.top_activation)
                  : mlp_forward(binder_, enc_prefix("top", s.name), code, s.encoder_hidden.size() + 1, s.activation);
    return split_gaussian(out, cfg.top_latent_dim);
}

Var ModelGraph::top_decode(std::size_t m, Var z) {
    const auto& s = model_.spec(m);
    const auto& cfg = model_.config;
    if (cfg.variant == Variant::FusionVae) throw ContractError("fusion_vae has no top decoders");
    return model_.hierarchical()
               ? mlp_forward(binder_, dec_prefix("top", s.name), z, cfg.top_hidden.size() + 1, cfg.top_activation)
               : mlp_forward(binder_, dec_prefix("top", s.name), z, s.decoder_hidden.size() + 1, s.activation);
}

GaussianVar ModelGraph::fusion_encode(const std::vector<Var>& blocks) {
    const auto& cfg = model_.config;
    if (cfg.variant != Variant::FusionVae) throw ContractError("fusion_encode needs the fusion_vae variant");
    if (blocks.size() != model_.modality_count()) throw ContractError("fusion_encode: one block per modality");
    Var x = blocks.front();
    for (std::size_t i = 1; i < blocks.size(); ++i) x = concat(x, blocks[i]);
    const auto& first = cfg.modalities.front();
    Var out = mlp_forward(binder_, "fusion.enc", x, first.encoder_hidden.size() + 1, first.activation);
    return split_gaussian(out, cfg.top_latent_dim);
}

Var ModelGraph::fusion_decode(std::size_t m, Var z) {
    const auto& s = model_.spec(m);
    return mlp_forward(binder_, dec_prefix("fusion", s.name), z, s.decoder_hidden.size() + 1, s.activation);
}

Var ModelGraph::decode_to_data(std::size_t m, Var z_pi) {
    require_modality(model_, m);
    switch (model_.config.variant) {
        case Variant::Muse:
        case Variant::MuseA: return bottom_decode(m, top_decode(m, z_pi));
        case Variant::MuseH:
        case Variant::FlatMvae: return top_decode(m, z_pi);
        case Variant::FusionVae: return fusion_decode(m, z_pi);
    }
    return z_pi;
}

GaussianVar ModelGraph::posterior(const std::map<std::size_t, Var>& codes, std::size_t rows) {
    const auto& cfg = model_.config;
    if (cfg.variant == Variant::FusionVae) {
        std::vector<Var> blocks;
        for (std::size_t m = 0; m < model_.modality_count(); ++m) {
            auto it = codes.find(m);
            blocks.push_back(it != codes.end() ? it->second : graph_.constant(Tensor({rows, model_.spec(m).data_dim}, 0.0)));
        }
        return fusion_encode(blocks);
    }
    std::vector<GaussianVar> experts;
    for (const auto& [m, c] : codes) experts.push_back(expert(m, c));
    return poe_combine(graph_, experts, true, rows, cfg.top_latent_dim);
}

Var negative_log_likelihood(LikelihoodKind kind, Var output, Var x) {
    if (output.shape() != x.shape())
        throw ShapeError("likelihood: output " + shape_to_string(output.shape()) + " vs data " +
                         shape_to_string(x.shape()));
    switch (kind) {
        case LikelihoodKind::Bernoulli: return sum(softplus(output) - x * output, 1);
        case LikelihoodKind::Categorical: return negate(sum(x * log_softmax(output), 1));
        case LikelihoodKind::Gaussian: {
            const double c = kHalfLog2Pi * static_cast<double>(x.value().cols());
            return add_scalar(scale(sum(square(output - x), 1), 0.5), c);
        }
    }
    return output;
}

double negative_log_likelihood_value(LikelihoodKind kind, std::span<const double> output, std::span<const double> x) {
    if (output.size() != x.size()) throw ShapeError("likelihood: output and data lengths differ");
    double nll = 0.0;
    switch (kind) {
        case LikelihoodKind::Bernoulli:
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double l = output[i];
                const double sp = l > 0.0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
                nll += sp - x[i] * l;
            }
            break;
        case LikelihoodKind::Categorical: {
            const double mx = *std::max_element(output.begin(), output.end());
            double s = 0.0;
            for (double l : output) s += std::exp(l - mx);
            const double lse = mx + std::log(s);
            for (std::size_t i = 0; i < x.size(); ++i) nll -= x[i] * (output[i] - lse);
            break;
        }
        case LikelihoodKind::Gaussian:
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double d = output[i] - x[i];
                nll += 0.5 * d * d + kHalfLog2Pi;
            }
            break;
    }
    return nll;
}

Tensor output_mean(LikelihoodKind kind, const Tensor& output) {
    Tensor out = output;
    switch (kind) {
        case LikelihoodKind::Bernoulli:
            for (auto& v : out.storage()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            break;
        case LikelihoodKind::Categorical:
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row_span(r);
                const double mx = *std::max_element(row.begin(), row.end());
                double s = 0.0;
                for (auto& v : row) s += (v = std::exp(v - mx));
                for (auto& v : row) v /= s;
            }
            break;
        case LikelihoodKind::Gaussian: break;
    }
    return out;
}

GaussianBatch encode_modality(const MuseModel& model, std::size_t m, const Tensor& x) {
    require_shape(model, m, x);
    ModelGraph mg(model);
    Var xv = mg.input(x);
    if (model.hierarchical()) return to_batch(mg.bottom_encode(m, xv));
    if (model.config.variant == Variant::FusionVae)
        throw ContractError("fusion_vae has no modality-specific encoder");
    return to_batch(mg.expert(m, xv));
}

GaussianBatch encode_modality(const MuseModel& model, const MultimodalSample& sample, std::size_t m) {
    require_modality(model, m);
    if (m >= sample.available.size() || !sample.available[m])
        throw ContractError("modality '" + model.spec(m).name + "' is unavailable in this sample");
    return encode_modality(model, m, sample.data[m]);
}

Tensor code_of(const MuseModel& model, std::size_t m, const Tensor& x, CodeMode mode, const Tensor* noise) {
    require_shape(model, m, x);
    if (!model.hierarchical()) return x;
    const GaussianBatch q = encode_modality(model, m, x);
    if (mode == CodeMode::Deterministic) return q.mean;
    if (!noise) throw ContractError("code_of: sampled mode needs a noise tensor");
    if (noise->shape() != q.mean.shape())
        throw ShapeError("code_of: noise shape " + shape_to_string(noise->shape()) + " differs from " +
                         shape_to_string(q.mean.shape()));
    Tensor c = q.mean;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += std::exp(0.5 * q.logvar[i]) * (*noise)[i];
    return c;
}

GaussianBatch encode_multimodal(const MuseModel& model, const std::map<std::size_t, Tensor>& codes, std::size_t rows) {
    ModelGraph mg(model);
    std::map<std::size_t, Var> vars;
    for (const auto& [m, c] : codes) {
        require_modality(model, m);
        if (c.rank() != 2 || c.rows() != rows || c.cols() != model.code_dim(m))
            throw ShapeError("encode_multimodal: code of '" + model.spec(m).name + "' has shape " +
                             shape_to_string(c.shape()));
        vars.emplace(m, mg.input(c));
    }
    return to_batch(mg.posterior(vars, rows));
}

GaussianBatch encode_sample(const MuseModel& model, const MultimodalSample& sample) {
    if (sample.data.size() != model.modality_count()) throw ContractError("sample modality count differs from model");
    ModelGraph mg(model);
    std::map<std::size_t, Var> codes;
    const std::size_t rows = sample.rows();
    for (std::size_t m = 0; m < model.modality_count(); ++m) {
        if (!sample.available[m]) continue;
        require_shape(model, m, sample.data[m]);
        Var x = mg.input(sample.data[m]);
        codes.emplace(m, model.hierarchical() ? mg.bottom_encode(m, x).mean : x);
    }
    return to_batch(mg.posterior(codes, rows));
}

std::vector<std::uint32_t> alma_subsets(std::size_t modality_count) {
    std::vector<std::uint32_t> out;
    if (modality_count == 0 || modality_count > 16) return out;
    const std::uint32_t full = (1u << modality_count) - 1u;
    for (std::uint32_t s = 1; s < full; ++s) out.push_back(s);
    return out;
}

LossGraph build_loss(ModelGraph& mg, const MultimodalSample& batch, const Rng& rng) {
    const MuseModel& model = mg.model();
    const auto& cfg = model.config;
    const std::size_t M = model.modality_count();
    if (batch.data.size() != M) throw ContractError("batch modality count differs from model");
    if (!batch.fully_available()) throw ContractError("training batches need every modality");
    const std::size_t B = batch.rows();
    Graph& g = mg.graph();

    std::vector<Var> xs;
    for (std::size_t m = 0; m < M; ++m) {
        require_shape(model, m, batch.data[m]);
        if (batch.data[m].rows() != B) throw ShapeError("batch modalities have different row counts");
        xs.push_back(mg.input(batch.data[m]));
    }

    LossGraph lg;
    lg.bottom = zero_scalar(g);
    lg.top = zero_scalar(g);
    lg.alma = zero_scalar(g);
    const std::size_t top_dim = cfg.top_latent_dim;

    auto alma = [&](const GaussianVar& joint, const std::vector<GaussianVar>& experts) {
        const auto subsets = alma_subsets(M);
        if (cfg.delta == 0.0 || subsets.empty()) return zero_scalar(g);
        Var acc{};
        bool first = true;
        for (auto mask : subsets) {
            std::vector<GaussianVar> part;
            for (std::size_t m = 0; m < M; ++m)
                if (mask & (1u << m)) part.push_back(experts[m]);
            Var s = symmetric_kl(joint, poe_combine(g, part, true, B, top_dim));
            acc = first ? s : acc + s;
            first = false;
        }
        return g.label(scale(mean_all(acc), cfg.delta / static_cast<double>(subsets.size())), "alma");
    };

    auto data_terms = [&](Var z, const std::vector<std::size_t>& members) {
        Var acc{};
        bool first = true;
        for (auto m : members) {
            const auto& s = model.spec(m);
            Var t = scale(negative_log_likelihood(s.likelihood, mg.decode_to_data(m, z), xs[m]), s.lambda);
            acc = first ? t : acc + t;
            first = false;
        }
        return acc;
    };

    std::vector<std::size_t> all(M);
    for (std::size_t m = 0; m < M; ++m) all[m] = m;

    switch (cfg.variant) {
        case Variant::Muse:
        case Variant::MuseA: {
            Var bottom_acc{};
            for (std::size_t m = 0; m < M; ++m) {
                const auto& s = model.spec(m);
                GaussianVar q = mg.bottom_encode(m, xs[m]);
                Var eps = mg.input(noise_tensor(rng, "bottom/" + s.name, B, s.latent_dim));
                Var z = reparam_sample(q, eps);
                Var nll = negative_log_likelihood(s.likelihood, mg.bottom_decode(m, z), xs[m]);
                Var term = scale(nll, s.lambda) + scale(kl_to_standard(q), s.alpha);
                bottom_acc = m == 0 ? term : bottom_acc + term;
                lg.codes.push_back(stop_gradient(z));
            }
            lg.bottom = g.label(mean_all(bottom_acc), "bottom_loss");

            std::vector<GaussianVar> experts;
            for (std::size_t m = 0; m < M; ++m) experts.push_back(mg.expert(m, lg.codes[m]));
            GaussianVar joint = poe_combine(g, experts, true, B, top_dim);
            Var z = reparam_sample(joint, mg.input(noise_tensor(rng, "top/joint", B, top_dim)));
            Var top_acc = scale(kl_to_standard(joint), cfg.beta);
            for (std::size_t m = 0; m < M; ++m) {
                Var rec = scale(sum(square(mg.top_decode(m, z) - lg.codes[m]), 1), 0.5);
                top_acc = top_acc + scale(rec, model.spec(m).gamma);
            }
            lg.top = g.label(mean_all(top_acc), "top_loss");
            lg.alma = alma(joint, experts);
            break;
        }
        case Variant::MuseH: {
            std::vector<GaussianVar> experts;
            for (std::size_t m = 0; m < M; ++m) {
                experts.push_back(mg.expert(m, xs[m]));
                lg.codes.push_back(xs[m]);
            }
            GaussianVar joint = poe_combine(g, experts, true, B, top_dim);
            Var z = reparam_sample(joint, mg.input(noise_tensor(rng, "top/joint", B, top_dim)));
            lg.top = g.label(mean_all(data_terms(z, all) + scale(kl_to_standard(joint), cfg.beta)), "top_loss");
            lg.alma = alma(joint, experts);
            break;
        }
        case Variant::FlatMvae: {
            std::vector<GaussianVar> experts;
            for (std::size_t m = 0; m < M; ++m) {
                experts.push_back(mg.expert(m, xs[m]));
                lg.codes.push_back(xs[m]);
            }
            GaussianVar joint = poe_combine(g, experts, true, B, top_dim);
            Var z = reparam_sample(joint, mg.input(noise_tensor(rng, "top/joint", B, top_dim)));
            Var acc = data_terms(z, all) + scale(kl_to_standard(joint), cfg.beta);
            lg.elbo_summands = 1;
            if (M > 1) {
                for (std::size_t m = 0; m < M; ++m) {
                    GaussianVar q = poe_combine(g, std::vector<GaussianVar>{experts[m]}, true, B, top_dim);
                    Var zs = reparam_sample(q, mg.input(noise_tensor(rng, "top/single/" + model.spec(m).name, B, top_dim)));
                    acc = acc + data_terms(zs, {m}) + scale(kl_to_standard(q), cfg.beta);
                    ++lg.elbo_summands;
                }
            }
            lg.top = g.label(mean_all(acc), "top_loss");
            break;
        }
        case Variant::FusionVae: {
            GaussianVar q = mg.fusion_encode(xs);
            Var z = reparam_sample(q, mg.input(noise_tensor(rng, "top/joint", B, top_dim)));
            lg.top = g.label(mean_all(data_terms(z, all) + scale(kl_to_standard(q), cfg.beta)), "top_loss");
            lg.codes = xs;
            lg.elbo_summands = 1;
            break;
        }
    }
    lg.total = g.label(lg.bottom + lg.top + lg.alma, "total_loss");
    return lg;
}

LossBreakdown evaluate_loss(const MuseModel& model, const MultimodalSample& batch, const Rng& rng) {
    ModelGraph mg(model);
    LossGraph lg = build_loss(mg, batch, rng);
    LossBreakdown b;
    b.bottom = lg.bottom.value()[0];
    b.top = lg.top.value()[0];
    b.alma = lg.alma.value()[0];
    b.total = lg.total.value()[0];
    b.elbo_summands = lg.elbo_summands;
    b.clamp_events = mg.graph().clamp_events();
    return b;
}

namespace {

void check_dataset(const MuseModel& model, const MultimodalDataset& ds) {
    ds.validate();
    if (ds.modality_count() != model.modality_count())
        throw ContractError("dataset has " + std::to_string(ds.modality_count()) + " modalities, model has " +
                            std::to_string(model.modality_count()));
    for (std::size_t m = 0; m < ds.modality_count(); ++m)
        if (ds.data[m].cols() != model.spec(m).data_dim)
            throw ShapeError("dataset modality '" + ds.names[m] + "' width " + std::to_string(ds.data[m].cols()) +
                             " differs from model's " + std::to_string(model.spec(m).data_dim));
}

void add_weighted(EpochLog& log, const LossBreakdown& b, double w) {
    log.bottom += w * b.bottom;
    log.top += w * b.top;
    log.alma += w * b.alma;
    log.total += w * b.total;
}

}  // namespace

TrainLog fit(MuseModel& model, const MultimodalDataset& dataset, const TrainConfig& config,
             const EpochCallback& on_epoch) {
    check_dataset(model, dataset);
    if (config.batch_size == 0) throw ContractError("batch_size must be positive");
    if (!(config.learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
    const Rng root = Rng(config.seed).split("fit");
    const AdamConfig adam{.learning_rate = config.learning_rate};
    const double n = static_cast<double>(dataset.size());
    TrainLog log;

    {
        EpochLog e0;
        const auto batches = batch_indices(dataset.size(), config.batch_size, 0, false);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto sample = gather(dataset, batches[b]);
            add_weighted(e0, evaluate_loss(model, sample, root.split("initial").split(b)),
                         static_cast<double>(batches[b].size()) / n);
        }
        log.epochs.push_back(e0);
        if (on_epoch) on_epoch(e0);
    }

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const ParamStore last_good = model.params;
        const Rng epoch_rng = root.split("epoch").split(epoch);
        const auto batches = batch_indices(dataset.size(), config.batch_size, mix64(config.seed ^ mix64(epoch)),
                                           config.shuffle);
        EpochLog e;
        e.epoch = epoch;
        try {
            for (std::size_t b = 0; b < batches.size(); ++b) {
                const auto sample = gather(dataset, batches[b]);
                ModelGraph mg(model);
                LossGraph lg = build_loss(mg, sample, epoch_rng.split(b));
                const LossBreakdown br{lg.bottom.value()[0], lg.top.value()[0], lg.alma.value()[0],
                                       lg.total.value()[0]};
                mg.graph().backward(lg.total);
                auto grads = mg.graph().param_grads();
                for (const auto& [name, gt] : grads)
                    if (!gt.all_finite()) throw NumericError("non-finite gradient for '" + name + "'");
                model.params.adam_step(grads, adam);
                add_weighted(e, br, static_cast<double>(batches[b].size()) / n);
            }
        } catch (const NumericError& err) {
            model.params = last_good;
            log.diverged = true;
            log.divergence = "epoch " + std::to_string(epoch) + ": " + err.what();
            return log;
        }
        log.epochs.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    return log;
}

Tensor cross_modal_generate(const MuseModel& model, const std::map<std::size_t, Tensor>& sources, std::size_t target,
                            GenerateMode mode, Rng* rng) {
    if (sources.empty()) throw ContractError("cross_modal_generate: no source modalities (use prior_sample)");
    require_modality(model, target);
    const std::size_t rows = sources.begin()->second.rows();
    ModelGraph mg(model);
    std::map<std::size_t, Var> codes;
    for (const auto& [m, x] : sources) {
        require_shape(model, m, x);
        if (x.rows() != rows) throw ShapeError("cross_modal_generate: sources have different row counts");
        Var xv = mg.input(x);
        codes.emplace(m, model.hierarchical() ? mg.bottom_encode(m, xv).mean : xv);
    }
    GaussianVar q = mg.posterior(codes, rows);
    Var z = q.mean;
    if (mode == GenerateMode::Sample) {
        if (!rng) throw ContractError("cross_modal_generate: sample mode needs an Rng");
        z = reparam_sample(q, mg.input(Tensor({rows, model.config.top_latent_dim},
                                              rng->normal_vector(rows * model.config.top_latent_dim))));
    }
    return output_mean(model.spec(target).likelihood, mg.decode_to_data(target, z).value());
}

Tensor prior_sample(const MuseModel& model, std::size_t target, std::size_t count, Rng& rng) {
    require_modality(model, target);
    if (count == 0) throw ContractError("prior_sample: count must be positive");
    ModelGraph mg(model);
    const std::size_t d = model.config.top_latent_dim;
    Var z = mg.input(Tensor({count, d}, rng.normal_vector(count * d)));
    return output_mean(model.spec(target).likelihood, mg.decode_to_data(target, z).value());
}

void save_checkpoint(const MuseModel& model, const std::filesystem::path& path) {
    model.params.save(path);
    model.config.to_config().save(path.string() + ".cfg");
}

MuseModel load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
    const std::filesystem::path sidecar = path.string() + ".cfg";
    if (!std::filesystem::exists(path) || !std::filesystem::exists(sidecar))
        throw ArtifactMismatch("checkpoint '" + path.string() + "' or its sidecar is missing");
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_config(Config::load(sidecar));
    } catch (const std::exception& e) {
        throw ArtifactMismatch("unreadable checkpoint sidecar: " + std::string(e.what()));
    }
    if (expected && !(cfg == *expected))
        throw ArtifactMismatch("checkpoint configuration differs from the requested model");
    MuseModel model;
    try {
        model = build_variant(cfg.variant, cfg);
    } catch (const ContractError& e) {
        throw ArtifactMismatch("checkpoint sidecar describes an invalid model: " + std::string(e.what()));
    }
    ParamStore stored;
    try {
        stored = ParamStore::load(path);
    } catch (const std::exception& e) {
        throw ArtifactMismatch("unreadable checkpoint: " + std::string(e.what()));
    }
    if (stored.names() != model.params.names())
        throw ArtifactMismatch("checkpoint parameter names do not match the model layout");
    for (const auto& name : stored.names())
        if (stored.value(name).shape() != model.params.value(name).shape())
            throw ArtifactMismatch("checkpoint parameter '" + name + "' has shape " +
                                   shape_to_string(stored.value(name).shape()) + ", model expects " +
                                   shape_to_string(model.params.value(name).shape()));
    model.params = std::move(stored);
    return model;
}

}  // namespace muse
