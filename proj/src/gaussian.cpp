#include "muse/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "muse/errors.hpp"

namespace muse {

namespace {

void require_same_dim(const DiagGaussian& a, const DiagGaussian& b, const char* op) {
    a.validate();
    b.validate();
    if (a.dim() != b.dim())
        throw ContractError(std::string(op) + ": dimension mismatch " + std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()));
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

double DiagGaussian::variance(std::size_t i) const { return std::exp(logvar.at(i)); }
double DiagGaussian::precision(std::size_t i) const { return std::exp(-logvar.at(i)); }

void DiagGaussian::validate() const {
    if (mean.size() != logvar.size())
        throw ContractError("DiagGaussian: mean and logvar lengths differ (" + std::to_string(mean.size()) + " vs " +
                            std::to_string(logvar.size()) + ")");
    for (double v : logvar)
        if (!std::isfinite(v)) throw ContractError("DiagGaussian: non-finite logvar");
}

double kl_to_standard(const DiagGaussian& q) {
    q.validate();
    double kl = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i)
        kl += q.mean[i] * q.mean[i] + std::exp(q.logvar[i]) - 1.0 - q.logvar[i];
    return 0.5 * kl;
}

double kl_between(const DiagGaussian& q, const DiagGaussian& p) {
    require_same_dim(q, p, "kl_between");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double d = q.mean[i] - p.mean[i];
        if (d == 0.0 && q.logvar[i] == p.logvar[i]) continue;
        kl += p.logvar[i] - q.logvar[i] + (std::exp(q.logvar[i]) + d * d) * std::exp(-p.logvar[i]) - 1.0;
    }
    return 0.5 * kl;
}

double symmetric_kl(const DiagGaussian& a, const DiagGaussian& b) {
    require_same_dim(a, b, "symmetric_kl");
    return kl_between(a, b) + kl_between(b, a);
}

DiagGaussian poe_combine(std::span<const DiagGaussian> experts, bool include_standard_prior, std::size_t dim,
                         PoeStats* stats) {
    if (experts.empty() && !include_standard_prior)
        throw ContractError("poe_combine: no experts and no prior");
    const std::size_t d = experts.empty() ? dim : experts.front().dim();
    if (experts.empty() && d == 0) throw ContractError("poe_combine: dimension required for prior-only product");
    std::vector<double> precision(d, include_standard_prior ? 1.0 : 0.0);
    std::vector<double> weighted(d, 0.0);
    for (const auto& e : experts) {
        e.validate();
        if (e.dim() != d) throw ContractError("poe_combine: experts have different dimensions");
        for (std::size_t i = 0; i < d; ++i) {
            double lv = e.logvar[i];
            if (lv < kLogvarMin || lv > kLogvarMax) {
                lv = std::clamp(lv, kLogvarMin, kLogvarMax);
                if (stats) ++stats->clamp_events;
            }
            const double t = std::exp(-lv);
            precision[i] += t;
            weighted[i] += e.mean[i] * t;
        }
    }
    DiagGaussian out{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t i = 0; i < d; ++i) {
        out.mean[i] = weighted[i] / precision[i];
        out.logvar[i] = -std::log(precision[i]);
    }
    return out;
}

std::vector<double> reparam_sample(const DiagGaussian& q, std::span<const double> noise) {
    q.validate();
    if (noise.size() != q.dim())
        throw ContractError("reparam_sample: noise dimension " + std::to_string(noise.size()) + " != " +
                            std::to_string(q.dim()));
    std::vector<double> z(q.dim());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mean[i] + std::exp(0.5 * q.logvar[i]) * noise[i];
    return z;
}

std::vector<double> reparam_sample(const DiagGaussian& q, Rng& rng) {
    const auto noise = rng.normal_vector(q.dim());
    return reparam_sample(q, noise);
}

double log_pdf(const DiagGaussian& q, std::span<const double> x) {
    q.validate();
    if (x.size() != q.dim())
        throw ContractError("log_pdf: point dimension " + std::to_string(x.size()) + " != " + std::to_string(q.dim()));
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - q.mean[i];
        lp += -kHalfLog2Pi - 0.5 * q.logvar[i] - 0.5 * d * d * std::exp(-q.logvar[i]);
    }
    return lp;
}

double log_standard_normal(std::span<const double> x) {
    double lp = 0.0;
    for (double v : x) lp += -kHalfLog2Pi - 0.5 * v * v;
    return lp;
}

Var kl_to_standard(const GaussianVar& q) {
    // 0.5 * sum(mu^2 + exp(lv) - 1 - lv)
    Var t = square(q.mean) + exp(q.logvar) - q.logvar;
    return scale(add_scalar(sum(t, 1), -static_cast<double>(q.mean.value().cols())), 0.5);
}

Var kl_between(const GaussianVar& q, const GaussianVar& p) {
    Var inv_vp = exp(-p.logvar);
    Var d = q.mean - p.mean;
    Var t = p.logvar - q.logvar + (exp(q.logvar) + square(d)) * inv_vp;
    return scale(add_scalar(sum(t, 1), -static_cast<double>(q.mean.value().cols())), 0.5);
}

Var symmetric_kl(const GaussianVar& a, const GaussianVar& b) {
    // The log-variance terms cancel between the two directions.
    Var d2 = square(a.mean - b.mean);
    Var va = exp(a.logvar), vb = exp(b.logvar);
    Var t = (va + d2) * exp(-b.logvar) + (vb + d2) * exp(-a.logvar);
    return scale(add_scalar(sum(t, 1), -2.0 * static_cast<double>(a.mean.value().cols())), 0.5);
}

GaussianVar poe_combine(Graph& graph, std::span<const GaussianVar> experts, bool include_standard_prior,
                        std::size_t rows, std::size_t dim) {
    if (experts.empty()) {
        if (!include_standard_prior) throw ContractError("poe_combine: no experts and no prior");
        return {graph.constant(Tensor({rows, dim}, 0.0)), graph.constant(Tensor({rows, dim}, 0.0))};
    }
    Var precision_sum{}, weighted_sum{};
    bool first = true;
    for (const auto& e : experts) {
        if (e.mean.shape() != Shape{rows, dim} || e.logvar.shape() != Shape{rows, dim})
            throw ShapeError("poe_combine: expert shape " + shape_to_string(e.mean.shape()) + " differs from [" +
                             std::to_string(rows) + "," + std::to_string(dim) + "]");
        Var t = exp(-clamp(e.logvar, kLogvarMin, kLogvarMax));
        Var w = e.mean * t;
        if (first) {
            precision_sum = t;
            weighted_sum = w;
            first = false;
        } else {
            precision_sum = precision_sum + t;
            weighted_sum = weighted_sum + w;
        }
    }
    if (include_standard_prior) precision_sum = add_scalar(precision_sum, 1.0);
    return {weighted_sum * reciprocal(precision_sum), -log(precision_sum)};
}

Var reparam_sample(const GaussianVar& q, Var noise) { return q.mean + exp(scale(q.logvar, 0.5)) * noise; }

}  // namespace muse
