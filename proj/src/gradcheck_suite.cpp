#include "muse/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "muse/errors.hpp"
#include "muse/model.hpp"
#include "muse/nn.hpp"
#include "muse/rl/agents.hpp"

namespace muse {

namespace {

struct Instance {
    double rel_error = 0.0;
    std::size_t coords = 0;
    std::string worst_param;
};

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
    Tensor t({r, c});
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Magnitude in [lo, hi] with a random sign: keeps inputs off kinks at 0.
Tensor signed_tensor(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
    Tensor t({r, c});
    for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
    return t;
}

Instance from_report(const GradcheckReport& rep) {
    Instance in;
    in.rel_error = rep.max_rel_error;
    in.coords = rep.coords_checked;
    if (!rep.worst.empty()) in.worst_param = rep.worst.front().param;
    return in;
}

// Weighted sum so every output coordinate gets a distinct cotangent.
Var contract(Graph& g, Var out, Rng& rng) {
    const auto& s = out.value().shape();
    return sum_all(out * g.constant(random_tensor(rng, s[0], s[1], -1.0, 1.0)));
}

using OpBuilder = std::function<Var(Graph&, Rng&, std::size_t, std::size_t)>;

struct OpCase {
    std::string name;
    OpBuilder build;
};

std::vector<OpCase> op_cases() {
    const auto unary = [](auto f, double lo, double hi, bool is_signed) -> OpBuilder {
        return [=](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
            Tensor x = is_signed ? signed_tensor(rng, b, n, lo, hi) : random_tensor(rng, b, n, lo, hi);
            return f(g.param("x", x));
        };
    };
    const auto binary = [](auto f) -> OpBuilder {
        return [=](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
            Var x = g.param("x", random_tensor(rng, b, n, -2.0, 2.0));
            // Alternate between equal shapes and a broadcast row.
            const std::size_t rows = rng.uniform() < 0.5 ? b : 1;
            Var y = g.param("y", random_tensor(rng, rows, n, -2.0, 2.0));
            return f(x, y);
        };
    };
    std::vector<OpCase> cases;
    cases.push_back({"op.matmul", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         const std::size_t k = 1 + rng.uniform_int(5);
                         return matmul(g.param("a", random_tensor(rng, b, k, -2, 2)),
                                       g.param("w", random_tensor(rng, k, n, -2, 2)));
                     }});
    cases.push_back({"op.add", binary([](Var a, Var b) { return add(a, b); })});
    cases.push_back({"op.subtract", binary([](Var a, Var b) { return subtract(a, b); })});
    cases.push_back({"op.multiply", binary([](Var a, Var b) { return multiply(a, b); })});
    cases.push_back({"op.negate", unary([](Var x) { return negate(x); }, -2, 2, false)});
    cases.push_back({"op.exp", unary([](Var x) { return exp(x); }, -2, 2, false)});
    cases.push_back({"op.log", unary([](Var x) { return log(x); }, 0.5, 3, false)});
    cases.push_back({"op.square", unary([](Var x) { return square(x); }, -2, 2, false)});
    cases.push_back({"op.sum", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         return sum(g.param("x", random_tensor(rng, b, n, -2, 2)), rng.uniform_int(2));
                     }});
    cases.push_back({"op.mean", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         return mean(g.param("x", random_tensor(rng, b, n, -2, 2)), rng.uniform_int(2));
                     }});
    cases.push_back({"op.sigmoid", unary([](Var x) { return sigmoid(x); }, -4, 4, false)});
    cases.push_back({"op.relu", unary([](Var x) { return relu(x); }, 0.05, 2, true)});
    cases.push_back({"op.swish", unary([](Var x) { return swish(x); }, -4, 4, false)});
    cases.push_back({"op.tanh", unary([](Var x) { return tanh(x); }, -3, 3, false)});
    cases.push_back({"op.softplus", unary([](Var x) { return softplus(x); }, -5, 5, false)});
    cases.push_back({"op.log_softmax", unary([](Var x) { return log_softmax(x); }, -3, 3, false)});
    cases.push_back({"op.logsumexp", unary([](Var x) { return logsumexp(x); }, -3, 3, false)});
    cases.push_back({"op.concat", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         const std::size_t k = 1 + rng.uniform_int(4);
                         return concat(g.param("a", random_tensor(rng, b, n, -2, 2)),
                                       g.param("b", random_tensor(rng, b, k, -2, 2)));
                     }});
    cases.push_back({"op.slice", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         const std::size_t w = n + 2;
                         const std::size_t begin = rng.uniform_int(w - 1);
                         const std::size_t end = begin + 1 + rng.uniform_int(w - begin);
                         return slice(g.param("x", random_tensor(rng, b, w, -2, 2)), begin, end);
                     }});
    cases.push_back({"op.bias_add", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         return bias_add(g.param("x", random_tensor(rng, b, n, -2, 2)),
                                         g.param("bias", random_tensor(rng, 1, n, -2, 2)));
                     }});
    cases.push_back({"op.scale", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         return scale(g.param("x", random_tensor(rng, b, n, -2, 2)), rng.uniform(-3, 3));
                     }});
    cases.push_back({"op.add_scalar", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         return add_scalar(g.param("x", random_tensor(rng, b, n, -2, 2)), rng.uniform(-3, 3));
                     }});
    cases.push_back({"op.reciprocal", unary([](Var x) { return reciprocal(x); }, 0.5, 2, true)});
    cases.push_back({"op.clamp", [](Graph& g, Rng& rng, std::size_t b, std::size_t n) {
                         // Values sit inside or outside [-1, 1] but never within 0.05 of a bound.
                         Tensor x({b, n});
                         for (auto& v : x.data()) {
                             const double m = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.95) : rng.uniform(1.05, 2.0);
                             v = rng.uniform() < 0.5 ? -m : m;
                         }
                         return clamp(g.param("x", x), -1.0, 1.0);
                     }});
    return cases;
}

Instance run_op_instance(const OpCase& c, const GradcheckSuiteOptions& opt, Rng& rng) {
    Graph g(opt.graph);
    const std::size_t b = 1 + rng.uniform_int(4), n = 1 + rng.uniform_int(5);
    const Var out = contract(g, c.build(g, rng, b, n), rng);
    GradcheckOptions go{opt.step, opt.tolerance, 0, {}};
    Rng gr = rng.split("coords");
    return from_report(gradcheck(g, out, go, gr));
}

// x * stop_gradient(x) against x * constant(x): analytic gradients must
// agree exactly and the detached graph must pass finite differences.
Instance run_stop_gradient_instance(const GradcheckSuiteOptions& opt, Rng& rng) {
    const std::size_t b = 1 + rng.uniform_int(4), n = 1 + rng.uniform_int(5);
    const Tensor x = random_tensor(rng, b, n, -2, 2), w = random_tensor(rng, b, n, -1, 1);
    Graph g1(opt.graph), g2(opt.graph);
    Var x1 = g1.param("x", x);
    const Var out1 = sum_all(x1 * stop_gradient(x1) * g1.constant(w));
    Var x2 = g2.param("x", x);
    const Var out2 = sum_all(x2 * g2.constant(x) * g2.constant(w));
    g1.backward(out1);
    const Tensor ga = g1.param_grads().at("x");
    GradcheckOptions go{opt.step, opt.tolerance, 0, {}};
    Rng gr = rng.split("coords");
    const auto rep = gradcheck(g2, out2, go, gr);
    const Tensor gb = g2.param_grads().at("x");
    Instance in = from_report(rep);
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const double err = std::abs(ga[i] - gb[i]) / std::max(1.0, std::abs(gb[i]));
        if (err > in.rel_error) {
            in.rel_error = err;
            in.worst_param = "x (stopped branch)";
        }
    }
    return in;
}

ModelConfig tiny_config(Variant variant, Rng& rng) {
    ModelConfig cfg;
    ModalitySpec img;
    img.name = "image";
    img.data_dim = 6;
    img.likelihood = LikelihoodKind::Bernoulli;
    img.latent_dim = 2;
    img.encoder_hidden = {5};
    img.decoder_hidden = {5};
    img.gamma = 3.0;
    ModalitySpec lab;
    lab.name = "label";
    lab.data_dim = 3;
    lab.likelihood = LikelihoodKind::Categorical;
    lab.latent_dim = 2;
    lab.encoder_hidden = {4};
    lab.decoder_hidden = {4};
    lab.lambda = 5.0;
    lab.activation = Activation::Tanh;
    ModalitySpec snd;
    snd.name = "sound";
    snd.data_dim = 2;
    snd.likelihood = LikelihoodKind::Gaussian;
    snd.latent_dim = 1;
    snd.encoder_hidden = {3};
    snd.decoder_hidden = {3};
    cfg.modalities = {img, lab, snd};
    cfg.top_latent_dim = 2;
    cfg.top_hidden = {5};
    cfg.top_activation = Activation::Swish;
    cfg.variant = variant;
    cfg.beta = rng.uniform(0.5, 2.0);
    cfg.delta = variant == Variant::MuseA ? 0.0 : rng.uniform(0.5, 2.0);
    cfg.seed = rng.next_u64();
    return cfg;
}

MultimodalSample tiny_batch(Rng& rng, std::size_t rows) {
    MultimodalSample s;
    s.data = {random_tensor(rng, rows, 6, 0.0, 1.0), Tensor({rows, 3}, 0.0), random_tensor(rng, rows, 2, -2.0, 2.0)};
    for (std::size_t r = 0; r < rows; ++r) s.data[1].at(r, rng.uniform_int(3)) = 1.0;
    s.available = {true, true, true};
    return s;
}

enum class LossTerm { Bottom, Top, Alma, Total };

Instance run_loss_instance(Variant variant, LossTerm term, const GradcheckSuiteOptions& opt, Rng& rng) {
    const MuseModel model = build_variant(variant, tiny_config(variant, rng));
    const MultimodalSample batch = tiny_batch(rng, 2);
    const Rng noise = rng.split("noise");
    ModelGraph mg(model, opt.graph);
    const LossGraph lg = build_loss(mg, batch, noise);
    const bool hierarchical = model.hierarchical();

    Var out = lg.total;
    std::vector<std::string> prefixes;
    switch (term) {
        case LossTerm::Bottom: out = lg.bottom; prefixes = {"bottom."}; break;
        case LossTerm::Top: out = lg.top; prefixes = {"top."}; break;
        case LossTerm::Alma: out = lg.alma; prefixes = {"top."}; break;
        case LossTerm::Total:
            if (hierarchical) prefixes = {"top."};
            break;
    }
    GradcheckOptions go{opt.step, opt.tolerance, opt.loss_coords_per_param, prefixes};
    Rng gr = rng.split("coords");
    Instance in = from_report(gradcheck(mg.graph(), out, go, gr));

    if (term == LossTerm::Total && hierarchical) {
        // The bottom parameters only see the bottom loss through the total.
        const auto total_grads = mg.graph().param_grads();
        ModelGraph mb(model, opt.graph);
        const LossGraph lb = build_loss(mb, batch, noise);
        mb.graph().backward(lb.bottom);
        const auto bottom_grads = mb.graph().param_grads();
        for (const auto& [name, gb] : bottom_grads) {
            if (!name.starts_with("bottom.")) continue;
            const Tensor& gt = total_grads.at(name);
            for (std::size_t i = 0; i < gb.size(); ++i) {
                const double err = std::abs(gt[i] - gb[i]) / std::max(1.0, std::abs(gb[i]));
                if (err > in.rel_error) {
                    in.rel_error = err;
                    in.worst_param = name;
                }
            }
        }
        in.coords += 1;
    }
    return in;
}

// Smallest |pre-activation| over the hidden ReLU layers of the critic.
double critic_kink_margin(const DdpgAgent& agent, const Tensor& x, const Tensor& a) {
    Graph g;
    ParamBinder b(g, agent.critic);
    const Var in = concat(g.constant(x), g.constant(a));
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t l = 1; l + 1 < agent.critic_sizes.size(); ++l)
        for (double v : mlp_forward(b, "critic", in, l, Activation::Relu).value().storage())
            margin = std::min(margin, std::abs(v));
    return margin;
}

Instance run_critic_instance(const GradcheckSuiteOptions& opt, Rng& rng) {
    const std::size_t obs = 1 + rng.uniform_int(4), act = 1 + rng.uniform_int(2), rows = 2 + rng.uniform_int(4);
    Rng init = rng.split("init");
    DdpgAgent agent = make_ddpg_agent(obs, act, 2.0, {6, 5}, init);
    Tensor x, a;
    // Redraw biases and inputs until no ReLU input sits within reach of the
    // difference step; zero biases alone can put whole rows on the kink.
    do {
        for (const auto& name : agent.critic.names())
            if (name.ends_with(".b"))
                for (auto& v : agent.critic.mutable_value(name).storage()) v = rng.uniform(-0.5, 0.5);
        x = random_tensor(rng, rows, obs, -2, 2);
        a = random_tensor(rng, rows, act, -2, 2);
    } while (critic_kink_margin(agent, x, a) < 1e-2);
    const Tensor y = random_tensor(rng, rows, 1, -5, 5);
    Graph g(opt.graph);
    ParamBinder b(g, agent.critic);
    const Var q = mlp_forward(b, "critic", concat(g.constant(x), g.constant(a)), agent.critic_sizes.size() - 1,
                              Activation::Relu);
    const Var loss = mean_all(square(q - g.constant(y)));
    GradcheckOptions go{opt.step, opt.tolerance, 0, {}};
    Rng gr = rng.split("coords");
    return from_report(gradcheck(g, loss, go, gr));
}

using InstanceRunner = std::function<Instance(const GradcheckSuiteOptions&, Rng&)>;

std::vector<std::pair<std::string, InstanceRunner>> all_cases() {
    std::vector<std::pair<std::string, InstanceRunner>> out;
    for (auto& c : op_cases())
        out.emplace_back(c.name, [c](const GradcheckSuiteOptions& o, Rng& r) { return run_op_instance(c, o, r); });
    out.emplace_back("op.stop_gradient", run_stop_gradient_instance);
    const auto loss = [](Variant v, LossTerm t) {
        return [=](const GradcheckSuiteOptions& o, Rng& r) { return run_loss_instance(v, t, o, r); };
    };
    out.emplace_back("loss.bottom", loss(Variant::Muse, LossTerm::Bottom));
    out.emplace_back("loss.top", loss(Variant::Muse, LossTerm::Top));
    out.emplace_back("loss.alma", loss(Variant::Muse, LossTerm::Alma));
    out.emplace_back("loss.total", loss(Variant::Muse, LossTerm::Total));
    out.emplace_back("loss.muse_h", loss(Variant::MuseH, LossTerm::Total));
    out.emplace_back("loss.flat_mvae", loss(Variant::FlatMvae, LossTerm::Total));
    out.emplace_back("loss.fusion_vae", loss(Variant::FusionVae, LossTerm::Total));
    out.emplace_back("loss.ddpg_critic", run_critic_instance);
    return out;
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
    std::vector<std::string> names;
    for (const auto& [n, r] : all_cases()) names.push_back(n);
    return names;
}

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options) {
    if (options.instances == 0) throw ContractError("gradcheck suite: instances must be positive");
    const auto cases = all_cases();
    for (const auto& name : options.only)
        if (std::none_of(cases.begin(), cases.end(), [&](const auto& c) { return c.first == name; }))
            throw ContractError("gradcheck suite: unknown case '" + name + "'");
    GradcheckSuiteReport report;
    const Rng root = Rng(options.seed).split("gradcheck-suite");
    for (const auto& [name, runner] : cases) {
        if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), name) == options.only.end())
            continue;
        GradcheckCase c;
        c.name = name;
        const Rng stream = root.split(name);
        for (std::size_t i = 0; i < options.instances; ++i) {
            Rng rng = stream.split(i);
            const Instance in = runner(options, rng);
            ++c.instances;
            c.coords += in.coords;
            if (in.rel_error > c.worst_rel_error) {
                c.worst_rel_error = in.rel_error;
                c.worst_param = in.worst_param;
            }
        }
        c.passed = c.worst_rel_error <= options.tolerance;
        report.passed = report.passed && c.passed;
        report.cases.push_back(std::move(c));
    }
    return report;
}

std::string gradcheck_report_csv(const GradcheckSuiteReport& report) {
    std::string out = "case,instances,coords,worst_rel_error,worst_param,passed\n";
    for (const auto& c : report.cases)
        out += c.name + "," + std::to_string(c.instances) + "," + std::to_string(c.coords) + "," +
               format_double(c.worst_rel_error) + "," + c.worst_param + "," + (c.passed ? "true" : "false") + "\n";
    return out;
}

}  // namespace muse
