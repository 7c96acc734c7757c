#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muse/autodiff.hpp"
#include "muse/rng.hpp"

namespace muse {

struct GradcheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Coordinates sampled per parameter; 0 checks every coordinate.
    std::size_t max_coords_per_param = 0;
    /// When non-empty, only parameters whose name starts with one of these
    /// prefixes are perturbed.
    std::vector<std::string> only_prefixes;
};

struct GradcheckEntry {
    std::string param;
    std::size_t coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradcheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    /// Worst coordinate per parameter, sorted by decreasing error.
    std::vector<GradcheckEntry> worst;
};

/// Compare reverse-mode gradients of a scalar node against central finite
/// differences. The error metric is |analytic - fd| / max(1, |analytic|).
/// Leaf values are restored before returning.
GradcheckReport gradcheck(Graph& graph, Var output, const GradcheckOptions& options, Rng& rng);

}  // namespace muse
