#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "muse/gaussian.hpp"
#include "muse/model.hpp"
#include "muse/rng.hpp"

namespace muse::oracle {

inline DiagGaussian gaussian_1d(double mean, double var) { return {{mean}, {std::log(var)}}; }

/// Monte Carlo KL(q || p) with samples from q; returns {estimate, standard error}.
inline std::pair<double, double> mc_kl(const DiagGaussian& q, const DiagGaussian& p, std::size_t n, Rng& rng) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = reparam_sample(q, rng);
        const double d = log_pdf(q, x) - log_pdf(p, x);
        sum += d;
        sq += d * d;
    }
    const double mean = sum / static_cast<double>(n);
    return {mean, std::sqrt((sq / static_cast<double>(n) - mean * mean) / static_cast<double>(n))};
}

/// Mean and variance of the normalized product of 1-D expert densities
/// (times N(0, 1) with `prior`), by trapezoid moments of the unnormalized
/// log density on [-20, 20] with step 1e-3.
inline std::pair<double, double> grid_product_moments(const std::vector<DiagGaussian>& experts, bool prior) {
    const double h = 1e-3;
    const std::size_t n = 40000;
    std::vector<double> logd(n + 1);
    double peak = -1e300;
    for (std::size_t s = 0; s <= n; ++s) {
        const double x = -20.0 + h * static_cast<double>(s);
        double l = prior ? -0.5 * x * x : 0.0;
        for (const auto& e : experts) l += -0.5 * (x - e.mean[0]) * (x - e.mean[0]) / e.variance(0);
        logd[s] = l;
        peak = std::max(peak, l);
    }
    double z = 0, m1 = 0, m2 = 0;
    for (std::size_t s = 0; s <= n; ++s) {
        const double x = -20.0 + h * static_cast<double>(s);
        const double w = (s == 0 || s == n ? 0.5 : 1.0) * std::exp(logd[s] - peak);
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    const double mean = m1 / z;
    return {mean, m2 / z - mean * mean};
}

/// Linear-Gaussian toy: x = z W + b + e with z ~ N(0, I), e ~ N(0, I).
namespace linear_gaussian {

inline constexpr double kW[2][2] = {{1.0, 0.5}, {-0.3, 0.8}};
inline constexpr double kB[2] = {0.2, -0.1};

/// One Gaussian modality with a linear decoder matching the toy and a
/// linear encoder that is deliberately not the exact posterior.
inline MuseModel model(double encoder_gain = 0.4, double encoder_var = 0.6) {
    ModalitySpec x;
    x.name = "x";
    x.data_dim = 2;
    x.likelihood = LikelihoodKind::Gaussian;
    x.latent_dim = 2;
    x.encoder_hidden = {};
    x.decoder_hidden = {};
    ModelConfig cfg;
    cfg.modalities = {x};
    cfg.top_latent_dim = 2;
    auto m = build_variant(Variant::Muse, cfg);
    Tensor& we = m.params.mutable_value("bottom.x.enc.l0.w");
    Tensor& be = m.params.mutable_value("bottom.x.enc.l0.b");
    for (auto& v : we.storage()) v = 0.0;
    we.at(0, 0) = encoder_gain;
    we.at(1, 1) = encoder_gain;
    be[2] = be[3] = std::log(encoder_var);
    Tensor& wd = m.params.mutable_value("bottom.x.dec.l0.w");
    Tensor& bd = m.params.mutable_value("bottom.x.dec.l0.b");
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) wd.at(i, j) = kW[i][j];
    bd[0] = kB[0];
    bd[1] = kB[1];
    return m;
}

/// log N(x; b, W^T W + I).
inline double true_log_density(double x0, double x1) {
    double c[2][2];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) c[i][j] = kW[0][i] * kW[0][j] + kW[1][i] * kW[1][j] + (i == j ? 1.0 : 0.0);
    const double det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    const double d0 = x0 - kB[0], d1 = x1 - kB[1];
    const double quad = (c[1][1] * d0 * d0 - 2 * c[0][1] * d0 * d1 + c[0][0] * d1 * d1) / det;
    return -std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

inline Tensor sample(std::size_t n, Rng& rng) {
    Tensor x({n, 2});
    for (std::size_t r = 0; r < n; ++r) {
        const double z0 = rng.normal(), z1 = rng.normal();
        for (int j = 0; j < 2; ++j) x.at(r, j) = z0 * kW[0][j] + z1 * kW[1][j] + kB[j] + rng.normal();
    }
    return x;
}

inline double mean_truth(const Tensor& x) {
    double s = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += true_log_density(x.at(r, 0), x.at(r, 1));
    return s / static_cast<double>(x.rows());
}

}  // namespace linear_gaussian

}  // namespace muse::oracle
