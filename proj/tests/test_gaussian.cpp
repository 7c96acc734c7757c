#include <cmath>
#include <numbers>

#include "doctest.h"
#include "muse/errors.hpp"
#include "muse/gaussian.hpp"
#include "oracles.hpp"

using namespace muse;

namespace {

DiagGaussian g1(double mean, double var) { return {{mean}, {std::log(var)}}; }

DiagGaussian random_gaussian(Rng& rng, std::size_t dim) {
    DiagGaussian q;
    for (std::size_t i = 0; i < dim; ++i) {
        q.mean.push_back(rng.uniform(-2, 2));
        q.logvar.push_back(rng.uniform(-1.5, 1.5));
    }
    return q;
}

using oracle::mc_kl;

}  // namespace

TEST_CASE("kl_to_standard") {
    CHECK(kl_to_standard(g1(0, 1)) == 0.0);
    CHECK(kl_to_standard(g1(1, 1)) == doctest::Approx(0.5));
    CHECK(kl_to_standard(g1(0, 4)) == doctest::Approx(0.8069).epsilon(1e-4));
    Rng rng(1);
    const auto [mc, se] = mc_kl(g1(0, 4), DiagGaussian::standard(1), 1000000, rng);
    CHECK(std::abs(mc - kl_to_standard(g1(0, 4))) <= 3 * se);
}

TEST_CASE("kl_between") {
    CHECK(kl_between(g1(0.3, 2), g1(0.3, 2)) == 0.0);
    CHECK(kl_between(g1(0, 1), g1(1, 1)) == doctest::Approx(0.5));
    CHECK(kl_between(g1(1, 2), g1(0, 0.5)) == doctest::Approx(0.5 * (std::log(0.25) + 4.0 + 2.0 - 1.0)).epsilon(1e-14));
    Rng rng(2);
    const auto [mc, se] = mc_kl(g1(1, 2), g1(0, 0.5), 1000000, rng);
    CHECK(std::abs(mc - kl_between(g1(1, 2), g1(0, 0.5))) <= 3 * se);
    CHECK_THROWS_AS(kl_between(DiagGaussian::standard(2), DiagGaussian::standard(3)), ContractError);
}

TEST_CASE("kl is zero exactly at equality") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto q = random_gaussian(rng, 3);
        CHECK(kl_between(q, q) == 0.0);
        auto p = q;
        p.mean[rng.uniform_int(3)] += 1e-6;
        CHECK(kl_between(q, p) > 0.0);
    }
}

TEST_CASE("symmetric_kl") {
    CHECK(symmetric_kl(g1(0, 1), g1(0, 1)) == 0.0);
    CHECK(symmetric_kl(g1(0, 1), g1(1, 1)) == doctest::Approx(1.0));
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_gaussian(rng, 4), b = random_gaussian(rng, 4);
        CHECK(symmetric_kl(a, b) == symmetric_kl(b, a));
        CHECK(symmetric_kl(a, b) >= 0.0);
        CHECK(symmetric_kl(a, b) == doctest::Approx(kl_between(a, b) + kl_between(b, a)).epsilon(1e-14));
    }
}

TEST_CASE("poe_combine examples") {
    const auto prior = poe_combine({}, true, 1);
    CHECK(prior.mean[0] == 0.0);
    CHECK(prior.logvar[0] == 0.0);
    const std::vector<DiagGaussian> one{g1(2, 1)};
    const auto a = poe_combine(one, true);
    CHECK(a.mean[0] == doctest::Approx(1.0));
    CHECK(a.variance(0) == doctest::Approx(0.5));
    const std::vector<DiagGaussian> half{g1(1, 0.5)};
    const auto b = poe_combine(half, true);
    CHECK(b.mean[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(b.variance(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(poe_combine({}, false, 1), ContractError);
}

TEST_CASE("poe precision adds exactly and equal experts shrink variance") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        std::vector<DiagGaussian> experts;
        const std::size_t k = 1 + rng.uniform_int(4);
        for (std::size_t j = 0; j < k; ++j) experts.push_back(random_gaussian(rng, 3));
        const auto with_prior = poe_combine(experts, true);
        for (std::size_t d = 0; d < 3; ++d) {
            double total = 1.0;
            for (const auto& e : experts) total += e.precision(d);
            CHECK(with_prior.precision(d) == doctest::Approx(total).epsilon(1e-14));
        }
        const auto e = random_gaussian(rng, 2);
        const std::vector<DiagGaussian> same(k, e);
        const auto c = poe_combine(same, false);
        for (std::size_t d = 0; d < 2; ++d) {
            CHECK(c.mean[d] == doctest::Approx(e.mean[d]).epsilon(1e-14));
            CHECK(c.variance(d) == doctest::Approx(e.variance(d) / k).epsilon(1e-13));
        }
    }
}

TEST_CASE("poe agrees with a brute-force density product") {
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        std::vector<DiagGaussian> experts;
        const std::size_t k = 1 + rng.uniform_int(3);
        for (std::size_t j = 0; j < k; ++j) experts.push_back(g1(rng.uniform(-2, 2), rng.uniform(0.3, 2.0)));
        const bool prior = rng.uniform() < 0.5;
        const auto poe = poe_combine(experts, prior);
        const auto [mean, var] = oracle::grid_product_moments(experts, prior);
        CHECK(std::abs(poe.mean[0] - mean) <= 1e-8);
        CHECK(std::abs(poe.variance(0) - var) <= 1e-8);
    }
}

TEST_CASE("poe clamps collapsed experts") {
    PoeStats stats;
    const std::vector<DiagGaussian> e{{{0.0}, {-50.0}}};
    const auto out = poe_combine(e, true, 0, &stats);
    CHECK(stats.clamp_events == 1);
    CHECK(std::isfinite(out.logvar[0]));
}

TEST_CASE("reparam_sample") {
    const DiagGaussian q{{1.0, 2.0}, {std::log(0.25), std::log(4.0)}};
    const std::vector<double> zero{0.0, 0.0}, noise{1.0, -1.0};
    CHECK(reparam_sample(q, zero) == q.mean);
    const auto s = reparam_sample(q, noise);
    CHECK(s[0] == doctest::Approx(1.5));
    CHECK(s[1] == doctest::Approx(0.0));
    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(reparam_sample(q, bad), ContractError);
    Rng rng(7);
    const std::size_t n = 100000;
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = reparam_sample(q, rng);
        m0 += x[0];
        m1 += x[1];
    }
    CHECK(std::abs(m0 / n - 1.0) <= 3 * 0.5 / std::sqrt(n));
    CHECK(std::abs(m1 / n - 2.0) <= 3 * 2.0 / std::sqrt(n));
}

TEST_CASE("log_pdf") {
    const std::vector<double> zero{0.0}, one{1.0};
    CHECK(log_pdf(g1(0, 1), zero) == doctest::Approx(-0.9189385332).epsilon(1e-10));
    CHECK(log_pdf(g1(0, 1), one) == doctest::Approx(-1.4189385332).epsilon(1e-10));
    CHECK_THROWS_AS(log_pdf(DiagGaussian::standard(2), one), ContractError);
    const auto q = g1(0.7, 1.8);
    const double h = 1e-3;
    double integral = 0;
    for (int s = 0; s <= 40000; ++s) {
        const std::vector<double> x{-20.0 + h * s};
        integral += (s == 0 || s == 40000 ? 0.5 : 1.0) * std::exp(log_pdf(q, x));
    }
    CHECK(std::abs(integral * h - 1.0) <= 1e-6);
}

TEST_CASE("batched ops match the scalar forms") {
    Rng rng(8);
    const auto a = random_gaussian(rng, 3), b = random_gaussian(rng, 3);
    Graph g;
    const auto row = [&](const DiagGaussian& q) {
        return GaussianVar{g.constant(Tensor::row(q.mean)), g.constant(Tensor::row(q.logvar))};
    };
    CHECK(kl_to_standard(row(a)).value()[0] == doctest::Approx(kl_to_standard(a)).epsilon(1e-13));
    CHECK(kl_between(row(a), row(b)).value()[0] == doctest::Approx(kl_between(a, b)).epsilon(1e-13));
    CHECK(symmetric_kl(row(a), row(b)).value()[0] == doctest::Approx(symmetric_kl(a, b)).epsilon(1e-13));
    const std::vector<GaussianVar> experts{row(a), row(b)};
    const auto batched = poe_combine(g, experts, true, 1, 3);
    const std::vector<DiagGaussian> plain{a, b};
    const auto ref = poe_combine(plain, true);
    for (std::size_t d = 0; d < 3; ++d) {
        CHECK(batched.mean.value()[d] == doctest::Approx(ref.mean[d]).epsilon(1e-13));
        CHECK(batched.logvar.value()[d] == doctest::Approx(ref.logvar[d]).epsilon(1e-13));
    }
}
