#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "muse/autodiff.hpp"
#include "muse/param_store.hpp"
#include "muse/rng.hpp"

namespace muse {

enum class Activation { None, Relu, Swish, Tanh, Sigmoid };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a) noexcept;
Var activate(Var x, Activation a);

/// Dense stack `sizes[0] -> sizes[1] -> ... -> sizes.back()` stored as
/// `<prefix>.l<i>.w` ([in, out]) and `<prefix>.l<i>.b` ([out]).
/// Weights use Glorot-uniform initialization, biases start at zero.
void init_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& sizes, Rng& rng);

/// Hidden layers use `hidden`; the final layer uses `last`.
Var mlp_forward(ParamBinder& params, const std::string& prefix, Var x, std::size_t layers, Activation hidden,
                Activation last = Activation::None);

/// Zero the weights and bias of layer `layer` (used to start heads at a
/// fixed output).
void zero_layer(ParamStore& store, const std::string& prefix, std::size_t layer);

}  // namespace muse
