#include "muse/rl/agents.hpp"

#include <algorithm>
#include <cmath>

#include "muse/autodiff.hpp"
#include "muse/errors.hpp"
#include "muse/nn.hpp"

namespace muse {

namespace {

constexpr double kDivergence = 1e6;

Tensor mlp_eval(const ParamStore& store, const std::string& prefix, const Tensor& x, std::size_t layers,
                Activation last) {
    Graph g;
    ParamBinder b(g, store);
    return mlp_forward(b, prefix, g.constant(x), layers, Activation::Relu, last).value();
}

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

Tensor stack_rows(std::span<const Transition* const> batch, bool next) {
    const auto& first = next ? batch[0]->next_observation : batch[0]->observation;
    Tensor out({batch.size(), first.size()});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& v = next ? batch[i]->next_observation : batch[i]->observation;
        if (v.size() != first.size()) throw ShapeError("replay batch with ragged observations");
        std::copy(v.begin(), v.end(), out.row_span(i).begin());
    }
    return out;
}

void check_q(const Tensor& q, std::size_t step, const char* who) {
    double worst = 0.0;
    for (double v : q.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite Q value at step " + std::to_string(step));
        worst = std::max(worst, std::abs(v));
    }
    if (worst > kDivergence)
        throw NumericError(std::string(who) + ": diverged at step " + std::to_string(step) + " (max |Q| = " +
                           std::to_string(worst) + ")");
}

std::vector<std::size_t> read_sizes(const Config& c, const std::string& key) {
    auto s = c.get_sizes(key, {});
    if (s.size() < 2) throw ArtifactMismatch("agent sidecar: missing or short " + key);
    return s;
}

}  // namespace

Algorithm parse_algorithm(std::string_view name) {
    if (name == "dqn") return Algorithm::Dqn;
    if (name == "ddpg") return Algorithm::Ddpg;
    throw ContractError("unknown algorithm '" + std::string(name) + "'");
}

std::string_view algorithm_name(Algorithm a) noexcept { return a == Algorithm::Dqn ? "dqn" : "ddpg"; }

void AgentConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("agent: gamma must lie in [0, 1)");
    if (total_steps == 0 || buffer_capacity == 0 || batch_size == 0 || train_every == 0)
        throw ContractError("agent: steps, buffer capacity, batch size and train_every must be positive");
    if (!(learning_rate > 0.0 && actor_learning_rate > 0.0 && critic_learning_rate > 0.0))
        throw ContractError("agent: learning rates must be positive");
    if (!(epsilon_start >= epsilon_end && epsilon_end >= 0.0 && epsilon_start <= 1.0))
        throw ContractError("agent: need 1 >= epsilon_start >= epsilon_end >= 0");
    if (!(epsilon_fraction > 0.0 && epsilon_fraction <= 1.0)) throw ContractError("agent: epsilon_fraction in (0, 1]");
    if (target_update_every == 0) throw ContractError("agent: target_update_every must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("agent: tau must lie in (0, 1]");
    if (!(noise_sd >= 0.0 && noise_final >= 0.0)) throw ContractError("agent: noise must be non-negative");
    for (auto h : hidden)
        if (h == 0) throw ContractError("agent: hidden widths must be positive");
}

Config AgentConfig::to_config() const {
    Config c;
    c.set("agent.algorithm", std::string(algorithm_name(algorithm)));
    c.set("agent.gamma", gamma);
    c.set("agent.total_steps", total_steps);
    c.set("agent.buffer_capacity", buffer_capacity);
    c.set("agent.batch_size", batch_size);
    c.set("agent.hidden", hidden);
    c.set("agent.warmup_steps", warmup_steps);
    c.set("agent.train_every", train_every);
    c.set("agent.learning_rate", learning_rate);
    c.set("agent.epsilon_start", epsilon_start);
    c.set("agent.epsilon_end", epsilon_end);
    c.set("agent.epsilon_fraction", epsilon_fraction);
    c.set("agent.target_update_every", target_update_every);
    c.set("agent.actor_learning_rate", actor_learning_rate);
    c.set("agent.critic_learning_rate", critic_learning_rate);
    c.set("agent.tau", tau);
    c.set("agent.noise_sd", noise_sd);
    c.set("agent.noise_final", noise_final);
    c.set("agent.seed", static_cast<std::int64_t>(seed));
    return c;
}

AgentConfig AgentConfig::from_config(const Config& c) {
    AgentConfig a;
    try {
        a.algorithm = parse_algorithm(c.get_string("agent.algorithm", "ddpg"));
    } catch (const ContractError& e) {
        throw ConfigError("agent.algorithm", e.what());
    }
    a.gamma = c.get_double("agent.gamma", a.gamma);
    a.total_steps = c.get_size("agent.total_steps", a.total_steps);
    a.buffer_capacity = c.get_size("agent.buffer_capacity", a.buffer_capacity);
    a.batch_size = c.get_size("agent.batch_size", a.batch_size);
    a.hidden = c.get_sizes("agent.hidden", a.hidden);
    a.warmup_steps = c.get_size("agent.warmup_steps", a.warmup_steps);
    a.train_every = c.get_size("agent.train_every", a.train_every);
    a.learning_rate = c.get_double("agent.learning_rate", a.learning_rate);
    a.epsilon_start = c.get_double("agent.epsilon_start", a.epsilon_start);
    a.epsilon_end = c.get_double("agent.epsilon_end", a.epsilon_end);
    a.epsilon_fraction = c.get_double("agent.epsilon_fraction", a.epsilon_fraction);
    a.target_update_every = c.get_size("agent.target_update_every", a.target_update_every);
    a.actor_learning_rate = c.get_double("agent.actor_learning_rate", a.actor_learning_rate);
    a.critic_learning_rate = c.get_double("agent.critic_learning_rate", a.critic_learning_rate);
    a.tau = c.get_double("agent.tau", a.tau);
    a.noise_sd = c.get_double("agent.noise_sd", a.noise_sd);
    a.noise_final = c.get_double("agent.noise_final", a.noise_final);
    a.seed = c.get_u64("agent.seed", a.seed);
    try {
        a.validate();
    } catch (const ContractError& e) {
        throw ConfigError("agent", e.what());
    }
    return a;
}

double episode_score(double total, std::size_t steps, bool mean_metric) noexcept {
    if (!mean_metric || steps == 0) return total;
    return total / static_cast<double>(steps);
}

std::vector<double> DqnAgent::q_values(std::span<const double> observation) const {
    const Tensor q = q_values_batch(Tensor::row(observation));
    return {q.data().begin(), q.data().end()};
}

Tensor DqnAgent::q_values_batch(const Tensor& observations) const {
    return mlp_eval(q, "q", observations, sizes.size() - 1, Activation::None);
}

std::size_t DqnAgent::greedy(std::span<const double> observation) const {
    const auto q = q_values(observation);
    return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::vector<double> DdpgAgent::act(std::span<const double> observation) const {
    const Tensor a = act_batch(Tensor::row(observation));
    return {a.data().begin(), a.data().end()};
}

Tensor DdpgAgent::act_batch(const Tensor& observations) const {
    Tensor a = mlp_eval(actor, "actor", observations, actor_sizes.size() - 1, Activation::Tanh);
    for (auto& v : a.data()) v *= bound;
    return a;
}

Tensor DdpgAgent::q_batch(const Tensor& observations, const Tensor& actions) const {
    Graph g;
    ParamBinder b(g, critic);
    const Var in = concat(g.constant(observations), g.constant(actions));
    return mlp_forward(b, "critic", in, critic_sizes.size() - 1, Activation::Relu).value();
}

DqnAgent make_dqn_agent(std::size_t obs_dim, std::size_t actions, const std::vector<std::size_t>& hidden, Rng& rng) {
    if (obs_dim == 0 || actions == 0) throw ContractError("make_dqn_agent: empty observation or action space");
    DqnAgent a;
    a.sizes = layer_sizes(obs_dim, hidden, actions);
    Rng init = rng.split("q");
    init_mlp(a.q, "q", a.sizes, init);
    return a;
}

DdpgAgent make_ddpg_agent(std::size_t obs_dim, std::size_t action_dim, double bound,
                          const std::vector<std::size_t>& hidden, Rng& rng) {
    if (obs_dim == 0 || action_dim == 0) throw ContractError("make_ddpg_agent: empty observation or action space");
    if (!(bound > 0.0)) throw ContractError("make_ddpg_agent: bound must be positive");
    DdpgAgent a;
    a.bound = bound;
    a.actor_sizes = layer_sizes(obs_dim, hidden, action_dim);
    a.critic_sizes = layer_sizes(obs_dim + action_dim, hidden, 1);
    Rng ia = rng.split("actor"), ic = rng.split("critic");
    init_mlp(a.actor, "actor", a.actor_sizes, ia);
    init_mlp(a.critic, "critic", a.critic_sizes, ic);
    return a;
}

double epsilon_at(const AgentConfig& cfg, std::size_t step) noexcept {
    const double horizon = cfg.epsilon_fraction * static_cast<double>(cfg.total_steps);
    const double frac = std::min(1.0, static_cast<double>(step) / std::max(1.0, horizon));
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) noexcept {
    return Rng(seed).split("episode").split(episode).next_u64();
}

DqnResult train_dqn(DiscreteTask& task, const AgentConfig& cfg) {
    cfg.validate();
    const Rng root = Rng(cfg.seed).split("dqn");
    Rng init = root.split("init"), explore = root.split("explore"), replay = root.split("replay");
    DqnResult res;
    res.agent = make_dqn_agent(task.observation_dim(), task.action_count(), cfg.hidden, init);
    DqnAgent target = res.agent;
    ReplayBuffer buffer(cfg.buffer_capacity);
    const AdamConfig adam{cfg.learning_rate};
    const std::size_t actions = task.action_count();
    const Rng seeds = root.split("episodes");

    std::size_t episode = 0, ep_steps = 0;
    double ep_total = 0.0;
    auto obs = task.reset(episode_seed(seeds.key(), episode));
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        std::size_t action;
        if (step < cfg.warmup_steps || explore.uniform() < epsilon_at(cfg, step))
            action = explore.uniform_int(actions);
        else
            action = res.agent.greedy(obs);
        auto out = task.step(action);
        ep_total += out.reward;
        ++ep_steps;
        buffer.push({obs, {static_cast<double>(action)}, out.reward, out.observation, out.terminal});
        if (out.done) {
            res.curve.push_back({episode, episode_score(ep_total, ep_steps, task.mean_reward_metric()), ep_steps});
            ++episode;
            ep_total = 0.0;
            ep_steps = 0;
            obs = task.reset(episode_seed(seeds.key(), episode));
        } else {
            obs = std::move(out.observation);
        }

        if (step + 1 >= cfg.warmup_steps && buffer.size() >= cfg.batch_size && step % cfg.train_every == 0) {
            const auto batch = buffer.sample(cfg.batch_size, replay);
            const Tensor x = stack_rows(batch, false), xn = stack_rows(batch, true);
            const Tensor qn = target.q_values_batch(xn);
            check_q(qn, step, "dqn");
            Tensor y({batch.size(), 1}), mask({batch.size(), actions}, 0.0);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                y.at(i, 0) = q_target(*batch[i], qn.row_span(i), cfg.gamma);
                const auto a = static_cast<std::size_t>(batch[i]->action.at(0));
                if (a >= actions) throw ContractError("dqn: stored action out of range");
                mask.at(i, a) = 1.0;
            }
            Graph g;
            ParamBinder b(g, res.agent.q);
            const Var q = mlp_forward(b, "q", g.constant(x), res.agent.sizes.size() - 1, Activation::Relu);
            const Var chosen = sum(q * g.constant(mask), 1);
            const Var loss = mean_all(square(chosen - g.constant(y)));
            g.backward(loss);
            res.agent.q.adam_step(g.param_grads(), adam);
        }
        if ((step + 1) % cfg.target_update_every == 0) target.q.copy_values_from(res.agent.q);
    }
    return res;
}

CriticBatch make_critic_batch(const DdpgAgent& agent, const DdpgAgent& target,
                              std::span<const Transition* const> batch, double gamma) {
    (void)agent;
    CriticBatch cb;
    cb.observations = stack_rows(batch, false);
    const Tensor xn = stack_rows(batch, true);
    cb.actions = Tensor({batch.size(), batch[0]->action.size()});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i]->action.size() != cb.actions.cols()) throw ShapeError("ddpg: ragged actions in batch");
        std::copy(batch[i]->action.begin(), batch[i]->action.end(), cb.actions.row_span(i).begin());
    }
    const Tensor qn = target.q_batch(xn, target.act_batch(xn));
    cb.targets = Tensor({batch.size(), 1});
    for (std::size_t i = 0; i < batch.size(); ++i)
        cb.targets.at(i, 0) = batch[i]->reward + (batch[i]->done ? 0.0 : gamma * qn.at(i, 0));
    return cb;
}

DdpgResult train_ddpg(ContinuousTask& task, const AgentConfig& cfg) {
    cfg.validate();
    const Rng root = Rng(cfg.seed).split("ddpg");
    Rng init = root.split("init"), explore = root.split("explore"), replay = root.split("replay");
    DdpgResult res;
    const double bound = task.action_bound();
    const std::size_t adim = task.action_dim();
    res.agent = make_ddpg_agent(task.observation_dim(), adim, bound, cfg.hidden, init);
    DdpgAgent target = res.agent;
    ReplayBuffer buffer(cfg.buffer_capacity);
    const AdamConfig actor_adam{cfg.actor_learning_rate}, critic_adam{cfg.critic_learning_rate};
    const Rng seeds = root.split("episodes");

    std::size_t episode = 0, ep_steps = 0;
    double ep_total = 0.0;
    auto obs = task.reset(episode_seed(seeds.key(), episode));
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        std::vector<double> action(adim);
        if (step < cfg.warmup_steps) {
            for (auto& v : action) v = explore.uniform(-bound, bound);
        } else {
            action = res.agent.act(obs);
            const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
            const double sd = (cfg.noise_sd + frac * (cfg.noise_final - cfg.noise_sd)) * bound;
            for (auto& v : action) v = std::clamp(v + sd * explore.normal(), -bound, bound);
        }
        auto out = task.step(action);
        ep_total += out.reward;
        ++ep_steps;
        buffer.push({obs, action, out.reward, out.observation, out.terminal});
        if (out.done) {
            res.curve.push_back({episode, episode_score(ep_total, ep_steps, task.mean_reward_metric()), ep_steps});
            ++episode;
            ep_total = 0.0;
            ep_steps = 0;
            obs = task.reset(episode_seed(seeds.key(), episode));
        } else {
            obs = std::move(out.observation);
        }

        if (step + 1 < cfg.warmup_steps || buffer.size() < cfg.batch_size || step % cfg.train_every != 0) continue;
        const auto batch = buffer.sample(cfg.batch_size, replay);
        const CriticBatch cb = make_critic_batch(res.agent, target, batch, cfg.gamma);
        check_q(cb.targets, step, "ddpg");
        {
            Graph g;
            ParamBinder b(g, res.agent.critic);
            const Var in = concat(g.constant(cb.observations), g.constant(cb.actions));
            const Var q = mlp_forward(b, "critic", in, res.agent.critic_sizes.size() - 1, Activation::Relu);
            const Var loss = mean_all(square(q - g.constant(cb.targets)));
            g.backward(loss);
            res.agent.critic.adam_step(g.param_grads(), critic_adam);
        }
        {
            Graph g;
            ParamBinder ba(g, res.agent.actor), bc(g, res.agent.critic);
            const Var x = g.constant(cb.observations);
            const Var mu = scale(mlp_forward(ba, "actor", x, res.agent.actor_sizes.size() - 1, Activation::Relu,
                                             Activation::Tanh),
                                 bound);
            const Var q = mlp_forward(bc, "critic", concat(x, mu), res.agent.critic_sizes.size() - 1, Activation::Relu);
            g.backward(negate(mean_all(q)));
            auto grads = g.param_grads();
            std::erase_if(grads, [](const auto& kv) { return !kv.first.starts_with("actor."); });
            res.agent.actor.adam_step(grads, actor_adam);
        }
        target.actor.soft_update_from(res.agent.actor, cfg.tau);
        target.critic.soft_update_from(res.agent.critic, cfg.tau);
    }
    return res;
}

EvalSummary summarize(std::vector<double> scores) {
    EvalSummary s;
    s.episode_scores = std::move(scores);
    if (s.episode_scores.empty()) return s;
    double m = 0.0;
    for (double v : s.episode_scores) m += v;
    m /= static_cast<double>(s.episode_scores.size());
    double var = 0.0;
    for (double v : s.episode_scores) var += (v - m) * (v - m);
    s.mean = m;
    s.sd = s.episode_scores.size() > 1 ? std::sqrt(var / static_cast<double>(s.episode_scores.size() - 1)) : 0.0;
    return s;
}

EvalSummary evaluate_policy(DiscreteTask& task, const DiscretePolicy& policy, std::size_t episodes,
                            std::uint64_t seed) {
    std::vector<double> scores;
    for (std::size_t e = 0; e < episodes; ++e) {
        auto obs = task.reset(episode_seed(seed, e));
        double total = 0.0;
        std::size_t steps = 0;
        while (true) {
            auto out = task.step(policy(obs));
            total += out.reward;
            ++steps;
            if (out.done) break;
            obs = std::move(out.observation);
        }
        scores.push_back(episode_score(total, steps, task.mean_reward_metric()));
    }
    return summarize(std::move(scores));
}

EvalSummary evaluate_policy(ContinuousTask& task, const ContinuousPolicy& policy, std::size_t episodes,
                            std::uint64_t seed) {
    std::vector<double> scores;
    for (std::size_t e = 0; e < episodes; ++e) {
        auto obs = task.reset(episode_seed(seed, e));
        double total = 0.0;
        std::size_t steps = 0;
        while (true) {
            auto out = task.step(policy(obs));
            total += out.reward;
            ++steps;
            if (out.done) break;
            obs = std::move(out.observation);
        }
        scores.push_back(episode_score(total, steps, task.mean_reward_metric()));
    }
    return summarize(std::move(scores));
}

void save_agent(const DqnAgent& agent, const std::filesystem::path& path) {
    agent.q.save(path);
    Config c;
    c.set("agent.algorithm", std::string("dqn"));
    c.set("agent.sizes", agent.sizes);
    c.save(path.string() + ".cfg");
}

void save_agent(const DdpgAgent& agent, const std::filesystem::path& path) {
    ParamStore all = agent.actor;
    for (const auto& n : agent.critic.names()) all.add(n, agent.critic.value(n));
    all.save(path);
    Config c;
    c.set("agent.algorithm", std::string("ddpg"));
    c.set("agent.actor_sizes", agent.actor_sizes);
    c.set("agent.critic_sizes", agent.critic_sizes);
    c.set("agent.bound", agent.bound);
    c.save(path.string() + ".cfg");
}

namespace {

Config load_agent_sidecar(const std::filesystem::path& path, std::string_view algorithm) {
    const std::filesystem::path side = path.string() + ".cfg";
    if (!std::filesystem::exists(path) || !std::filesystem::exists(side))
        throw ArtifactMismatch("agent checkpoint '" + path.string() + "' or its sidecar is missing");
    Config c = Config::load(side);
    if (c.get_string("agent.algorithm", "") != algorithm)
        throw ArtifactMismatch("agent checkpoint is not a " + std::string(algorithm) + " agent");
    return c;
}

void check_layout(const ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& sizes) {
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::string w = prefix + ".l" + std::to_string(l) + ".w", b = prefix + ".l" + std::to_string(l) + ".b";
        if (!store.contains(w) || !store.contains(b) || store.value(w).shape() != Shape{sizes[l], sizes[l + 1]} ||
            store.value(b).size() != sizes[l + 1])
            throw ArtifactMismatch("agent checkpoint layout differs at " + w);
    }
}

}  // namespace

DqnAgent load_dqn_agent(const std::filesystem::path& path) {
    const Config c = load_agent_sidecar(path, "dqn");
    DqnAgent a;
    a.sizes = read_sizes(c, "agent.sizes");
    a.q = ParamStore::load(path);
    check_layout(a.q, "q", a.sizes);
    return a;
}

DdpgAgent load_ddpg_agent(const std::filesystem::path& path) {
    const Config c = load_agent_sidecar(path, "ddpg");
    DdpgAgent a;
    a.actor_sizes = read_sizes(c, "agent.actor_sizes");
    a.critic_sizes = read_sizes(c, "agent.critic_sizes");
    a.bound = c.get_double("agent.bound", 1.0);
    const ParamStore all = ParamStore::load(path);
    for (const auto& n : all.names()) (n.starts_with("actor.") ? a.actor : a.critic).add(n, all.value(n));
    check_layout(a.actor, "actor", a.actor_sizes);
    check_layout(a.critic, "critic", a.critic_sizes);
    return a;
}

}  // namespace muse
