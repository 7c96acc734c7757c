#include "muse/nn.hpp"

#include <cmath>

#include "muse/errors.hpp"

namespace muse {

Activation parse_activation(std::string_view name) {
    if (name == "none") return Activation::None;
    if (name == "relu") return Activation::Relu;
    if (name == "swish") return Activation::Swish;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw ContractError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) noexcept {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu: return "relu";
        case Activation::Swish: return "swish";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "none";
}

Var activate(Var x, Activation a) {
    switch (a) {
        case Activation::None: return x;
        case Activation::Relu: return relu(x);
        case Activation::Swish: return swish(x);
        case Activation::Tanh: return tanh(x);
        case Activation::Sigmoid: return sigmoid(x);
    }
    return x;
}

void init_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw ContractError("init_mlp: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l], out = sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Tensor w({in, out});
        for (auto& v : w.storage()) v = rng.uniform(-limit, limit);
        store.add(prefix + ".l" + std::to_string(l) + ".w", std::move(w));
        store.add(prefix + ".l" + std::to_string(l) + ".b", Tensor({out}, 0.0));
    }
}

Var mlp_forward(ParamBinder& params, const std::string& prefix, Var x, std::size_t layers, Activation hidden,
                Activation last) {
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        x = bias_add(matmul(x, params(base + ".w")), params(base + ".b"));
        x = activate(x, l + 1 == layers ? last : hidden);
    }
    return x;
}

void zero_layer(ParamStore& store, const std::string& prefix, std::size_t layer) {
    const std::string base = prefix + ".l" + std::to_string(layer);
    for (auto& v : store.mutable_value(base + ".w").storage()) v = 0.0;
    for (auto& v : store.mutable_value(base + ".b").storage()) v = 0.0;
}

}  // namespace muse
