#pragma once

#include <cstdint>
#include <vector>

#include "muse/config.hpp"
#include "muse/envs/observation.hpp"
#include "muse/rng.hpp"

namespace muse {

struct PendulumConfig {
    double gravity = 10.0;
    double mass = 1.0;
    double length = 1.0;
    double dt = 0.05;
    double max_torque = 2.0;
    double max_speed = 8.0;
    std::size_t max_steps = 200;
    std::size_t image_size = 32;
    double f0 = 440.0;
    double speed_of_sound = 20.0;
    double amplitude_k = 1.0;
    std::vector<Vec2> receivers{{-1.5, 0.0}, {1.5, 0.0}};

    void validate() const;
    /// Keys under "pendulum.".
    Config to_config() const;
    static PendulumConfig from_config(const Config& cfg);
    std::size_t sound_dim() const noexcept { return 2 * receivers.size(); }
    std::size_t image_pixels() const noexcept { return image_size * image_size; }
};

/// theta = 0 is upright; positive theta rotates the rod counter-clockwise.
struct PendulumState {
    double theta = 0.0;
    double theta_dot = 0.0;
    std::size_t step = 0;

    bool operator==(const PendulumState&) const = default;
};

/// Wraps to (-pi, pi].
double wrap_angle(double theta);

struct PendulumStep {
    PendulumState state;
    double reward = 0.0;
    bool done = false;
};

/// One integration step. The torque is clamped to +-max_torque and the
/// reward is computed from the pre-step state. `done` is always false;
/// episode truncation is the caller's business.
PendulumStep pendulum_step(const PendulumConfig& cfg, const PendulumState& state, double torque);

/// Rod tip position and velocity in world units (pivot at the origin).
Vec2 pendulum_tip(const PendulumConfig& cfg, const PendulumState& state);
Vec2 pendulum_tip_velocity(const PendulumConfig& cfg, const PendulumState& state);

/// Swing-up controller with full state access: pumps energy toward the
/// upright level, then balances with a PD law once near the top.
double pendulum_scripted_torque(const PendulumConfig& cfg, const PendulumState& state);

std::vector<double> render_pendulum(const PendulumConfig& cfg, const PendulumState& state);
/// Per receiver: heard frequency / f0 and amplitude / K-normalizer, where
/// the normalizer is the amplitude at the closest reachable distance.
std::vector<double> pendulum_sound(const PendulumConfig& cfg, const PendulumState& state);
Observation pendulum_observe(const PendulumConfig& cfg, const PendulumState& state);

/// Episodic wrapper: uniform initial angle, angular speed in [-1, 1],
/// truncation after max_steps.
class PendulumEnv {
public:
    explicit PendulumEnv(PendulumConfig cfg = {});

    const PendulumConfig& config() const noexcept { return cfg_; }
    const PendulumState& state() const noexcept { return state_; }

    Observation reset(std::uint64_t seed);
    Observation reset_to(const PendulumState& state);
    /// Returns the reward; `done()` turns true after max_steps.
    double step(double torque);
    bool done() const noexcept { return state_.step >= cfg_.max_steps; }
    Observation observe() const { return pendulum_observe(cfg_, state_); }

private:
    PendulumConfig cfg_;
    PendulumState state_;
};

}  // namespace muse
