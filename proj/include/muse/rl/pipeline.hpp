#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "muse/datasets.hpp"
#include "muse/envs/hyperhot.hpp"
#include "muse/envs/pendulum.hpp"
#include "muse/rl/adapter.hpp"
#include "muse/rl/agents.hpp"

namespace muse {

enum class EnvKind { Pendulum, Hyperhot };
EnvKind parse_env_kind(std::string_view name);
std::string_view env_kind_name(EnvKind kind) noexcept;

struct EnvSpec {
    EnvKind kind = EnvKind::Pendulum;
    PendulumConfig pendulum;
    HyperhotConfig hyperhot;

    std::size_t image_dim() const noexcept;
    std::size_t image_size() const noexcept;
    std::size_t sound_dim() const noexcept;
    /// "env.name" plus the chosen environment's section.
    Config to_config() const;
    static EnvSpec from_config(const Config& cfg);
};

/// Pendulum seen through an adapter. Episodes are truncated, never terminal;
/// the score is the mean reward per step.
class PendulumTask : public ContinuousTask {
public:
    PendulumTask(PendulumConfig cfg, const ObservationAdapter& adapter, std::array<bool, 2> mask = {true, true},
                 Rng* training_rng = nullptr);

    std::size_t observation_dim() const override { return adapter_.output_dim(); }
    std::size_t action_dim() const override { return 1; }
    double action_bound() const override { return env_.config().max_torque; }
    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::span<const double> action) override;
    bool mean_reward_metric() const override { return true; }

private:
    std::vector<double> encode(Observation obs);

    PendulumEnv env_;
    const ObservationAdapter& adapter_;
    std::array<bool, 2> mask_;
    Rng* training_rng_;
};

/// HyperHot seen through an adapter; the score is the episode total.
class HyperhotTask : public DiscreteTask {
public:
    HyperhotTask(HyperhotConfig cfg, const ObservationAdapter& adapter, std::array<bool, 2> mask = {true, true},
                 Rng* training_rng = nullptr);

    std::size_t observation_dim() const override { return adapter_.output_dim(); }
    std::size_t action_count() const override { return kHyperhotActions; }
    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;

private:
    std::vector<double> encode(Observation obs);

    HyperhotEnv env_;
    const ObservationAdapter& adapter_;
    std::array<bool, 2> mask_;
    Rng* training_rng_;
};

/// Observations at states drawn uniformly (angle over the circle, speed
/// over the full range). Modalities "image" and "sound"; sound unscaled.
MultimodalDataset pendulum_dataset(const PendulumConfig& cfg, std::size_t count, std::uint64_t seed);
/// Frames of rollouts that mix the scripted policy with random actions.
MultimodalDataset hyperhot_dataset(const HyperhotConfig& cfg, std::size_t count, std::uint64_t seed);
MultimodalDataset env_dataset(const EnvSpec& env, std::size_t count, std::uint64_t seed);

/// Fits a scaler on the "sound" modality and applies it in place.
FeatureScaler standardize_sound(MultimodalDataset& dataset);

ModelConfig env_model_config(const EnvSpec& env, Variant variant);

/// Evaluation under a modality mask; never updates parameters.
EvalSummary zero_shot_eval(const DdpgAgent& agent, const ObservationAdapter& adapter, const PendulumConfig& cfg,
                           std::array<bool, 2> mask, std::size_t episodes, std::uint64_t seed);
EvalSummary zero_shot_eval(const DqnAgent& agent, const ObservationAdapter& adapter, const HyperhotConfig& cfg,
                           std::array<bool, 2> mask, std::size_t episodes, std::uint64_t seed);
/// Uniformly random actions, with the same episode seeds as zero_shot_eval.
EvalSummary random_policy_eval(const EnvSpec& env, std::size_t episodes, std::uint64_t seed);

struct RewardRow {
    std::string agent_kind;
    std::string modality_mask;
    std::uint64_t seed = 0;
    /// Episode index, or "all" for an evaluation mean.
    std::string episode;
    double reward = 0.0;
};

/// Header "agent_kind,modality_mask,seed,episode,reward"; rewards with 17
/// significant digits.
std::string reward_csv(const std::vector<RewardRow>& rows);

}  // namespace muse
