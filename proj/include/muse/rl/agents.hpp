#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "muse/config.hpp"
#include "muse/param_store.hpp"
#include "muse/rl/replay.hpp"
#include "muse/rng.hpp"

namespace muse {

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    /// Episode over (terminal or truncated).
    bool done = false;
    /// Terminal state: targets do not bootstrap past it.
    bool terminal = false;
};

class DiscreteTask {
public:
    virtual ~DiscreteTask() = default;
    virtual std::size_t observation_dim() const = 0;
    virtual std::size_t action_count() const = 0;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::size_t action) = 0;
    /// Report per-step mean reward per episode instead of the total.
    virtual bool mean_reward_metric() const { return false; }
};

class ContinuousTask {
public:
    virtual ~ContinuousTask() = default;
    virtual std::size_t observation_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    /// Actions live in [-bound, bound] per coordinate.
    virtual double action_bound() const = 0;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::span<const double> action) = 0;
    virtual bool mean_reward_metric() const { return false; }
};

enum class Algorithm { Dqn, Ddpg };
Algorithm parse_algorithm(std::string_view name);
std::string_view algorithm_name(Algorithm a) noexcept;

struct AgentConfig {
    Algorithm algorithm = Algorithm::Ddpg;
    double gamma = 0.99;
    std::size_t total_steps = 100000;
    std::size_t buffer_capacity = 50000;
    std::size_t batch_size = 128;
    std::vector<std::size_t> hidden{64, 64};
    /// Uniform random actions before learning starts.
    std::size_t warmup_steps = 1000;
    std::size_t train_every = 1;
    // DQN
    double learning_rate = 1e-3;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_fraction = 0.3;
    std::size_t target_update_every = 500;
    // DDPG
    double actor_learning_rate = 1e-4;
    double critic_learning_rate = 1e-3;
    double tau = 0.005;
    /// Exploration sd as a fraction of the action bound, decayed linearly
    /// to noise_final over training.
    double noise_sd = 0.1;
    double noise_final = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
    /// Keys under "agent.".
    Config to_config() const;
    static AgentConfig from_config(const Config& cfg);
};

struct EpisodeRecord {
    std::size_t episode = 0;
    double reward = 0.0;
    std::size_t steps = 0;
};

/// Episode score: total reward, or the per-step mean.
double episode_score(double total, std::size_t steps, bool mean_metric) noexcept;

struct DqnAgent {
    ParamStore q;
    std::vector<std::size_t> sizes;

    std::vector<double> q_values(std::span<const double> observation) const;
    Tensor q_values_batch(const Tensor& observations) const;
    std::size_t greedy(std::span<const double> observation) const;
};

struct DdpgAgent {
    ParamStore actor;
    ParamStore critic;
    std::vector<std::size_t> actor_sizes;
    std::vector<std::size_t> critic_sizes;
    double bound = 1.0;

    std::vector<double> act(std::span<const double> observation) const;
    Tensor act_batch(const Tensor& observations) const;
    Tensor q_batch(const Tensor& observations, const Tensor& actions) const;
};

DqnAgent make_dqn_agent(std::size_t obs_dim, std::size_t actions, const std::vector<std::size_t>& hidden, Rng& rng);
DdpgAgent make_ddpg_agent(std::size_t obs_dim, std::size_t action_dim, double bound,
                          const std::vector<std::size_t>& hidden, Rng& rng);

struct DqnResult {
    DqnAgent agent;
    std::vector<EpisodeRecord> curve;
};

struct DdpgResult {
    DdpgAgent agent;
    std::vector<EpisodeRecord> curve;
};

/// Linear epsilon schedule from epsilon_start to epsilon_end over the
/// first epsilon_fraction of total_steps.
double epsilon_at(const AgentConfig& cfg, std::size_t step) noexcept;

/// Epsilon-greedy DQN with uniform replay, MSE TD loss and hard target
/// updates. Throws NumericError when |Q| exceeds 1e6.
DqnResult train_dqn(DiscreteTask& task, const AgentConfig& cfg);

/// DDPG with soft target updates and decaying Gaussian exploration.
/// Throws NumericError when |Q| exceeds 1e6.
DdpgResult train_ddpg(ContinuousTask& task, const AgentConfig& cfg);

/// Critic regression loss of one batch with the critic's weights as
/// trainable leaves (exposed for gradient checks).
struct CriticBatch {
    Tensor observations;
    Tensor actions;
    Tensor targets;
};
CriticBatch make_critic_batch(const DdpgAgent& agent, const DdpgAgent& target,
                              std::span<const Transition* const> batch, double gamma);

using DiscretePolicy = std::function<std::size_t(std::span<const double>)>;
using ContinuousPolicy = std::function<std::vector<double>(std::span<const double>)>;

struct EvalSummary {
    std::vector<double> episode_scores;
    double mean = 0.0;
    double sd = 0.0;
};

EvalSummary summarize(std::vector<double> scores);
/// Episode i resets with a seed derived from (seed, i).
EvalSummary evaluate_policy(DiscreteTask& task, const DiscretePolicy& policy, std::size_t episodes, std::uint64_t seed);
EvalSummary evaluate_policy(ContinuousTask& task, const ContinuousPolicy& policy, std::size_t episodes,
                            std::uint64_t seed);
std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) noexcept;

/// Agent checkpoint: parameters at `path`, "agent.*" sidecar at path.cfg.
void save_agent(const DqnAgent& agent, const std::filesystem::path& path);
void save_agent(const DdpgAgent& agent, const std::filesystem::path& path);
DqnAgent load_dqn_agent(const std::filesystem::path& path);
DdpgAgent load_ddpg_agent(const std::filesystem::path& path);

}  // namespace muse
