#include "muse/rl/adapter.hpp"

#include <cmath>

#include "muse/errors.hpp"

namespace muse {

AdapterKind parse_adapter_kind(std::string_view name) {
    if (name == "raw_fusion") return AdapterKind::RawFusion;
    if (name == "raw_fusion_dropout") return AdapterKind::RawFusionDropout;
    if (name == "vae_latent") return AdapterKind::VaeLatent;
    if (name == "mvae_latent") return AdapterKind::MvaeLatent;
    if (name == "muse_latent") return AdapterKind::MuseLatent;
    throw ContractError("unknown adapter kind '" + std::string(name) + "'");
}

std::string_view adapter_kind_name(AdapterKind kind) noexcept {
    switch (kind) {
        case AdapterKind::RawFusion: return "raw_fusion";
        case AdapterKind::RawFusionDropout: return "raw_fusion_dropout";
        case AdapterKind::VaeLatent: return "vae_latent";
        case AdapterKind::MvaeLatent: return "mvae_latent";
        case AdapterKind::MuseLatent: return "muse_latent";
    }
    return "?";
}

bool adapter_needs_model(AdapterKind kind) noexcept {
    return kind == AdapterKind::VaeLatent || kind == AdapterKind::MvaeLatent || kind == AdapterKind::MuseLatent;
}

FeatureScaler FeatureScaler::fit(const Tensor& data) {
    FeatureScaler s;
    const std::size_t n = data.rows(), d = data.cols();
    if (n == 0) throw ContractError("FeatureScaler::fit: no rows");
    s.shift.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) s.shift[c] += data.at(r, c);
    for (auto& v : s.shift) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) s.scale[c] += std::pow(data.at(r, c) - s.shift[c], 2);
    for (auto& v : s.scale) v = std::max(1e-6, std::sqrt(v / static_cast<double>(n)));
    return s;
}

std::vector<double> FeatureScaler::apply(std::span<const double> x) const {
    if (identity()) return {x.begin(), x.end()};
    if (x.size() != shift.size()) throw ShapeError("FeatureScaler: width mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - shift[i]) / scale[i];
    return out;
}

void FeatureScaler::apply_rows(Tensor& data) const {
    if (identity()) return;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto row = apply(data.row_span(r));
        std::copy(row.begin(), row.end(), data.row_span(r).begin());
    }
}

Config FeatureScaler::to_config(const std::string& prefix) const {
    Config c;
    const auto join = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
        return s;
    };
    c.set(prefix + ".shift", join(shift));
    c.set(prefix + ".scale", join(scale));
    return c;
}

FeatureScaler FeatureScaler::from_config(const Config& cfg, const std::string& prefix) {
    FeatureScaler s;
    const auto read = [&](const std::string& key) {
        std::vector<double> out;
        for (const auto& item : cfg.get_list(key, {})) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ConfigError(key, "not a list of numbers");
            }
        }
        return out;
    };
    s.shift = read(prefix + ".shift");
    s.scale = read(prefix + ".scale");
    if (s.shift.size() != s.scale.size()) throw ConfigError(prefix, "shift and scale lengths differ");
    for (double v : s.scale)
        if (!(v > 0.0)) throw ConfigError(prefix + ".scale", "entries must be positive");
    return s;
}

void ObservationAdapter::validate() const {
    if (image_dim == 0 || sound_dim == 0) throw ContractError("adapter: image_dim and sound_dim must be set");
    if (!sound_scaler.identity() && sound_scaler.shift.size() != sound_dim)
        throw ContractError("adapter: sound scaler width differs from sound_dim");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("adapter: dropout must lie in [0, 1)");
    if (!adapter_needs_model(kind)) return;
    if (!model) throw ContractError("adapter: kind " + std::string(adapter_kind_name(kind)) + " needs a trained model");
    const auto v = model->config.variant;
    const bool family_ok = (kind == AdapterKind::VaeLatent && v == Variant::FusionVae) ||
                           (kind == AdapterKind::MvaeLatent && v == Variant::FlatMvae) ||
                           (kind == AdapterKind::MuseLatent &&
                            (v == Variant::Muse || v == Variant::MuseA || v == Variant::MuseH));
    if (!family_ok)
        throw ContractError("adapter: model variant " + std::string(variant_name(v)) + " does not fit kind " +
                            std::string(adapter_kind_name(kind)));
    const auto& cfg = model->config;
    if (cfg.modalities.size() != 2 || cfg.modalities[cfg.modality_index("image")].data_dim != image_dim ||
        cfg.modalities[cfg.modality_index("sound")].data_dim != sound_dim)
        throw ContractError("adapter: model modalities must be image and sound of the environment's sizes");
}

std::size_t ObservationAdapter::output_dim() const {
    if (adapter_needs_model(kind)) return model->config.top_latent_dim;
    return image_dim + sound_dim;
}

std::vector<double> latent_observation(const ObservationAdapter& a, const Observation& obs, Rng* training_rng) {
    if (obs.image.size() != a.image_dim || obs.sound.size() != a.sound_dim)
        throw ShapeError("latent_observation: observation sizes differ from the adapter's");
    const std::vector<double> sound = a.sound_scaler.apply(obs.sound);
    std::array<bool, 2> avail = obs.available;

    if (!adapter_needs_model(a.kind)) {
        if (!avail[0] && !avail[1]) throw ContractError("latent_observation: raw adapter with no modality available");
        if (a.kind == AdapterKind::RawFusionDropout && training_rng) {
            for (auto& m : avail)
                if (m && training_rng->uniform() < a.dropout) m = false;
        }
        std::vector<double> out(a.image_dim + a.sound_dim, 0.0);
        if (avail[0]) std::copy(obs.image.begin(), obs.image.end(), out.begin());
        if (avail[1]) std::copy(sound.begin(), sound.end(), out.begin() + static_cast<std::ptrdiff_t>(a.image_dim));
        return out;
    }

    const MuseModel& model = *a.model;
    std::map<std::size_t, Tensor> codes;
    if (avail[0]) {
        const std::size_t m = model.config.modality_index("image");
        codes[m] = code_of(model, m, Tensor::row(obs.image), CodeMode::Deterministic);
    }
    if (avail[1]) {
        const std::size_t m = model.config.modality_index("sound");
        codes[m] = code_of(model, m, Tensor::row(sound), CodeMode::Deterministic);
    }
    const auto q = encode_multimodal(model, codes, 1);
    return {q.mean.data().begin(), q.mean.data().end()};
}

}  // namespace muse
