#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "muse/autodiff.hpp"
#include "muse/rng.hpp"

namespace muse {

/// Log-variance bounds applied to experts before precision inversion.
inline constexpr double kLogvarMin = -20.0;
inline constexpr double kLogvarMax = 20.0;

struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> logvar;

    static DiagGaussian standard(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)}; }
    std::size_t dim() const noexcept { return mean.size(); }
    double variance(std::size_t i) const;
    double precision(std::size_t i) const;
    /// Throws ContractError when lengths differ or logvar is non-finite.
    void validate() const;
};

/// KL(q || N(0, I)).
double kl_to_standard(const DiagGaussian& q);
/// KL(q || p) in closed form.
double kl_between(const DiagGaussian& q, const DiagGaussian& p);
/// KL(a || b) + KL(b || a).
double symmetric_kl(const DiagGaussian& a, const DiagGaussian& b);

struct PoeStats {
    std::size_t clamp_events = 0;
};

/// Product of Gaussian experts. Precisions add; the mean is the
/// precision-weighted mean. With `include_standard_prior` an N(0, I) expert
/// joins the product. Expert log-variances are clamped to
/// [kLogvarMin, kLogvarMax]; each clamped coordinate counts in `stats`.
/// `dim` is only consulted when `experts` is empty.
DiagGaussian poe_combine(std::span<const DiagGaussian> experts, bool include_standard_prior, std::size_t dim = 0,
                         PoeStats* stats = nullptr);

/// mean + exp(logvar / 2) * noise.
std::vector<double> reparam_sample(const DiagGaussian& q, std::span<const double> noise);
std::vector<double> reparam_sample(const DiagGaussian& q, Rng& rng);

double log_pdf(const DiagGaussian& q, std::span<const double> x);
/// Standard normal log density of x.
double log_standard_normal(std::span<const double> x);

// Batched, differentiable counterparts. Each row of mean/logvar ([B, D]) is
// one Gaussian; divergences return one value per row ([B, 1]).

struct GaussianVar {
    Var mean;
    Var logvar;
};

Var kl_to_standard(const GaussianVar& q);
Var kl_between(const GaussianVar& q, const GaussianVar& p);
Var symmetric_kl(const GaussianVar& a, const GaussianVar& b);
/// Batched product of experts; `rows`/`dim` fix the output shape when there
/// are no experts (the prior alone).
GaussianVar poe_combine(Graph& graph, std::span<const GaussianVar> experts, bool include_standard_prior,
                        std::size_t rows, std::size_t dim);
Var reparam_sample(const GaussianVar& q, Var noise);

}  // namespace muse
