#include <cmath>
#include <cstring>

#include "doctest.h"
#include "muse/autodiff.hpp"
#include "muse/errors.hpp"
#include "muse/gradcheck.hpp"
#include "muse/gradcheck_suite.hpp"
#include "muse/nn.hpp"
#include "muse/param_store.hpp"

using namespace muse;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (auto& v : t.storage()) v = rng.uniform(-2.0, 2.0);
    return t;
}

}  // namespace

TEST_CASE("forward examples") {
    Graph g;
    const Var y = matmul(g.constant(Tensor::matrix({{1, 2}, {3, 4}})), g.constant(Tensor::matrix({{1}, {1}})));
    CHECK(y.value() == Tensor::matrix({{3}, {7}}));
    CHECK(swish(g.constant(Tensor::matrix({{0.0}}))).value()[0] == 0.0);
    const Var ls = log_softmax(g.constant(Tensor::matrix({{0.0, 0.0}})));
    CHECK(ls.value()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(ls.value()[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("backward examples") {
    SUBCASE("square") {
        Graph g;
        const Var x = g.param("x", Tensor::matrix({{3.0}}));
        g.backward(sum_all(square(x)));
        CHECK(g.param_grads().at("x")[0] == 6.0);
    }
    SUBCASE("swish derivative at one against a finite difference") {
        Graph g;
        const Var x = g.param("x", Tensor::matrix({{1.0}}));
        g.backward(sum_all(swish(x)));
        CHECK(g.param_grads().at("x")[0] == doctest::Approx(0.9277).epsilon(1e-4));
    }
    SUBCASE("stop gradient detaches one factor") {
        Graph g;
        const Var x = g.param("x", Tensor::matrix({{2.0}}));
        g.backward(sum_all(stop_gradient(x) * x));
        CHECK(g.param_grads().at("x")[0] == 2.0);
    }
    SUBCASE("non-scalar output is rejected") {
        Graph g;
        const Var x = g.param("x", Tensor::matrix({{1.0, 2.0}}));
        CHECK_THROWS_AS(g.backward(x), ContractError);
    }
}

TEST_CASE("errors name the offending node") {
    Graph g;
    const Var a = g.input("a", Tensor::zeros(2, 3));
    const Var b = g.input("b", Tensor::zeros(2, 3));
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    const Var c = g.input("c", Tensor::matrix({{-1.0}}));
    CHECK_THROWS_AS(log(c), NumericError);
    const Var big = g.input("big", Tensor::matrix({{1000.0}}));
    CHECK_THROWS_AS(exp(big), NumericError);
}

TEST_CASE("forward replaces leaves and is reproducible") {
    Graph g;
    const Var x = g.input("x", Tensor::zeros(1, 2));
    const Var w = g.param("w", Tensor::matrix({{0.5}, {-1.5}}));
    g.mark_output("y", tanh(matmul(x, w)));
    const Tensor in = Tensor::matrix({{0.3, 0.7}});
    const auto first = g.forward({{"x", in}});
    const auto second = g.forward({{"x", in}});
    const Tensor& a = first.at("y");
    const Tensor& b = second.at("y");
    CHECK(std::memcmp(a.storage().data(), b.storage().data(), a.size() * sizeof(double)) == 0);
    CHECK(a[0] == doctest::Approx(std::tanh(0.15 - 1.05)));
}

TEST_CASE("logsumexp shift invariance") {
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(-1000, 1000), b = a + rng.uniform(-5, 5), c = rng.uniform(-1000, 1000);
        Graph g;
        const double base = logsumexp(g.constant(Tensor::matrix({{a, b}}))).value()[0];
        const double shifted = logsumexp(g.constant(Tensor::matrix({{a + c, b + c}}))).value()[0];
        CHECK(std::abs(shifted - (c + base)) <= 1e-12 * std::max(1.0, std::abs(c + base)));
    }
}

TEST_CASE("stopped branches receive exactly zero gradient") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        Graph g;
        const Var a = g.param("a", random_tensor(rng, 3, 4));
        const Var b = g.param("b", random_tensor(rng, 3, 4));
        const Var stopped = stop_gradient(tanh(a) * b);
        g.backward(sum_all(square(stopped) + sigmoid(b)));
        const auto grads = g.param_grads();
        for (double v : grads.at("a").storage()) CHECK(v == 0.0);
        bool any_b = false;
        for (double v : grads.at("b").storage()) any_b = any_b || v != 0.0;
        CHECK(any_b);
    }
}

TEST_CASE("gradcheck toy graphs") {
    SUBCASE("quadratic") {
        Graph g;
        const Var x = g.param("x", Tensor::matrix({{1.0, -2.0, 0.5}}));
        Rng rng(0);
        const auto rep = gradcheck(g, sum_all(square(x) * 3.0), GradcheckOptions{}, rng);
        CHECK(rep.max_rel_error < 1e-9);
    }
    SUBCASE("two-layer swish MLP with a Bernoulli loss") {
        Rng rng(3);
        ParamStore store;
        init_mlp(store, "net", {5, 8, 4}, rng);
        Graph g;
        ParamBinder b(g, store);
        const Tensor x = random_tensor(rng, 6, 5);
        Tensor target({6, 4});
        for (auto& v : target.storage()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const Var logits = mlp_forward(b, "net", g.constant(x), 2, Activation::Swish);
        // Bernoulli negative log-likelihood from logits.
        const Var nll = sum_all(softplus(logits) - logits * g.constant(target));
        const auto rep = gradcheck(g, nll, GradcheckOptions{}, rng);
        CHECK(rep.passed);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("a broken backward is reported") {
        GraphOptions opt;
        opt.faulty_backward = OpKind::Tanh;
        Graph g(opt);
        const Var x = g.param("x", Tensor::matrix({{0.3, -0.4}}));
        Rng rng(0);
        const auto rep = gradcheck(g, sum_all(tanh(x)), GradcheckOptions{}, rng);
        CHECK_FALSE(rep.passed);
        REQUIRE_FALSE(rep.worst.empty());
        CHECK(rep.worst.front().param == "x");
    }
}

TEST_CASE("every op kind passes finite differences") {
    GradcheckSuiteOptions opt;
    opt.instances = 20;
    std::vector<std::string> ops;
    for (const auto& n : gradcheck_case_names())
        if (n.starts_with("op.")) ops.push_back(n);
    opt.only = ops;
    const auto report = run_gradcheck_suite(opt);
    CHECK(report.cases.size() == ops.size());
    for (const auto& c : report.cases) {
        INFO(c.name);
        CHECK(c.passed);
    }
}

TEST_CASE("gradcheck suite detects an injected fault in each differentiable op") {
    for (OpKind kind : {OpKind::MatMul, OpKind::Exp, OpKind::Log, OpKind::Sigmoid, OpKind::LogSoftmax,
                        OpKind::Concat, OpKind::BiasAdd, OpKind::LogSumExp}) {
        GradcheckSuiteOptions opt;
        opt.instances = 3;
        opt.graph.faulty_backward = kind;
        opt.only = {"op." + std::string(op_name(kind))};
        INFO(op_name(kind));
        CHECK_FALSE(run_gradcheck_suite(opt).passed);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step moves by the learning rate") {
        ParamStore s;
        s.add("p", Tensor::matrix({{1.0}}));
        s.adam_step({{"p", Tensor::matrix({{1.0}})}}, AdamConfig{});
        CHECK(s.value("p")[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
    }
    SUBCASE("zero gradient leaves the value") {
        ParamStore s;
        s.add("p", Tensor::matrix({{0.25}}));
        s.adam_step({{"p", Tensor::matrix({{0.0}})}}, AdamConfig{});
        CHECK(s.value("p")[0] == 0.25);
    }
    SUBCASE("two steps follow the hand-simulated recurrences") {
        // m2 = 0.14, v2 = 0.001249; bias corrections 0.19 and 0.001999.
        ParamStore s;
        s.add("p", Tensor::matrix({{1.0}}));
        s.adam_step({{"p", Tensor::matrix({{1.0}})}}, AdamConfig{});
        CHECK(s.value("p")[0] == doctest::Approx(0.99900000001).epsilon(1e-12));
        s.adam_step({{"p", Tensor::matrix({{0.5}})}}, AdamConfig{});
        CHECK(s.value("p")[0] == doctest::Approx(0.9980678203829816).epsilon(1e-12));
        CHECK(s.entry("p").step == 2);
    }
    SUBCASE("mismatched gradients are rejected") {
        ParamStore s;
        s.add("p", Tensor::matrix({{1.0, 2.0}}));
        CHECK_THROWS_AS(s.adam_step({{"p", Tensor::matrix({{1.0}})}}, AdamConfig{}), ContractError);
        CHECK_THROWS_AS(s.adam_step({{"q", Tensor::matrix({{1.0}})}}, AdamConfig{}), ContractError);
    }
}

TEST_CASE("param store round trip is byte exact") {
    Rng rng(9);
    ParamStore s;
    init_mlp(s, "net", {3, 4, 2}, rng);
    const auto bytes = s.serialize();
    CHECK(std::memcmp(bytes.data(), "MUSEPST1", 8) == 0);
    const ParamStore back = ParamStore::deserialize(bytes);
    CHECK(back == s);
    CHECK(back.serialize() == bytes);
    CHECK(back.checksum() == s.checksum());
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS(ParamStore::deserialize(truncated));
}

TEST_CASE("rng streams are reproducible and independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    const Rng root(42);
    CHECK(root.split("x").next_u64() == Rng(42).split("x").next_u64());
    CHECK(root.split("x").next_u64() != root.split("y").next_u64());
    Rng n(1);
    double sum = 0, sq = 0;
    const int count = 100000;
    for (int i = 0; i < count; ++i) {
        const double v = n.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / count) < 3.0 / std::sqrt(count) * 1.5);
    CHECK(sq / count == doctest::Approx(1.0).epsilon(0.02));
}
