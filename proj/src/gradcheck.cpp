#include "muse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muse/errors.hpp"

namespace muse {

GradcheckReport gradcheck(Graph& graph, Var output, const GradcheckOptions& options, Rng& rng) {
    graph.backward(output);
    const auto analytic = graph.param_grads();
    GradcheckReport report;

    for (const auto& [name, grad] : analytic) {
        if (!options.only_prefixes.empty() &&
            std::none_of(options.only_prefixes.begin(), options.only_prefixes.end(),
                         [&](const std::string& p) { return name.starts_with(p); }))
            continue;
        Tensor& leaf = graph.mutable_leaf_value(name);
        std::vector<std::size_t> coords(leaf.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
            // Partial Fisher-Yates for a deterministic sample.
            for (std::size_t i = 0; i < options.max_coords_per_param; ++i) {
                const std::size_t j = i + rng.uniform_int(coords.size() - i);
                std::swap(coords[i], coords[j]);
            }
            coords.resize(options.max_coords_per_param);
        }
        GradcheckEntry worst{name};
        worst.rel_error = -1.0;
        for (auto c : coords) {
            const double saved = leaf[c];
            leaf[c] = saved + options.step;
            graph.recompute();
            const double plus = graph.value(output)[0];
            leaf[c] = saved - options.step;
            graph.recompute();
            const double minus = graph.value(output)[0];
            leaf[c] = saved;
            const double fd = (plus - minus) / (2.0 * options.step);
            const double a = grad[c];
            const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
            ++report.coords_checked;
            if (err > worst.rel_error) worst = GradcheckEntry{name, c, a, fd, err};
        }
        if (worst.rel_error >= 0.0) {
            report.max_rel_error = std::max(report.max_rel_error, worst.rel_error);
            report.worst.push_back(worst);
        }
    }
    graph.recompute();
    std::sort(report.worst.begin(), report.worst.end(),
              [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
    report.passed = report.max_rel_error <= options.tolerance;
    return report;
}

}  // namespace muse
