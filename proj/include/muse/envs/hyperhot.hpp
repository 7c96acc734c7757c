#pragma once

#include <cstdint>
#include <vector>

#include "muse/config.hpp"
#include "muse/envs/observation.hpp"
#include "muse/envs/sound.hpp"
#include "muse/rng.hpp"

namespace muse {

enum class HyperhotAction : std::uint8_t { Noop = 0, Left = 1, Right = 2, Shoot = 3 };
inline constexpr std::size_t kHyperhotActions = 4;

enum class EnemyGroup : std::uint8_t { Left = 0, Right = 1 };
enum class BulletOwner : std::uint8_t { Agent = 0, Enemy = 1 };

/// Arena is [0, 1]^2 with y pointing up; the agent moves along y = agent_y.
struct HyperhotConfig {
    std::size_t image_size = 32;
    std::size_t enemies_per_group = 3;
    double enemy_y = 0.85;
    double enemy_spacing = 0.1;
    double left_group_x = 0.15;
    double right_group_x = 0.65;
    /// Enemies oscillate horizontally: amplitude * sin(2 pi t / period).
    double march_amplitude = 0.1;
    std::size_t march_period = 40;
    std::size_t fire_interval = 25;
    std::size_t fire_jitter = 5;
    std::size_t agent_cooldown = 8;
    std::size_t episode_limit = 500;
    double agent_y = 0.05;
    double agent_speed = 0.04;
    double agent_bullet_speed = 0.05;
    double enemy_bullet_speed = 0.03;
    double enemy_hit_dx = 0.05;
    double enemy_hit_dy = 0.04;
    double agent_hit_dx = 0.04;
    double agent_hit_dy = 0.04;
    std::vector<Vec2> receivers{{0.0, 0.0}, {1.0 / 3.0, 0.0}, {2.0 / 3.0, 0.0}, {1.0, 0.0}};
    SoundFieldConfig sound;

    void validate() const;
    /// Keys under "hyperhot.".
    Config to_config() const;
    static HyperhotConfig from_config(const Config& cfg);
    std::size_t sound_dim() const noexcept { return receivers.size() * sound.class_frequencies.size(); }
    std::size_t image_pixels() const noexcept { return image_size * image_size; }
};

struct Enemy {
    Vec2 position;
    EnemyGroup group = EnemyGroup::Left;
    bool alive = true;
    bool operator==(const Enemy&) const = default;
};

struct Bullet {
    Vec2 position;
    Vec2 velocity;
    BulletOwner owner = BulletOwner::Agent;
    bool operator==(const Bullet&) const = default;
};

struct HyperhotState {
    double agent_x = 0.5;
    std::size_t cooldown = 0;
    std::vector<Enemy> enemies;
    std::vector<Bullet> bullets;
    std::size_t time = 0;
    std::size_t next_fire = 0;
    bool done = false;
    /// Seeded stream for the enemy fire schedule.
    Rng fire_rng{0};

    std::size_t live_enemies() const noexcept;
};

struct HyperhotStep {
    double reward = 0.0;
    bool done = false;
};

HyperhotState hyperhot_initial_state(const HyperhotConfig& cfg, std::uint64_t seed);

/// Advances one frame. Order: agent moves or fires, enemies march, bullets
/// move, agent bullets hit enemies, enemies fire, enemy bullets hit the
/// agent. Reward +10 and done when the last enemy dies (checked first),
/// -1 and done when the agent is hit or the episode limit is reached,
/// 0 otherwise. Throws ContractError once the episode is over.
HyperhotStep hyperhot_step(const HyperhotConfig& cfg, HyperhotState& state, HyperhotAction action);

std::vector<ToneEmitter> hyperhot_emitters(const HyperhotState& state);
std::vector<double> hyperhot_sound(const HyperhotConfig& cfg, const HyperhotState& state);
/// Raw quantized waveforms, one per receiver.
std::vector<std::vector<std::int16_t>> hyperhot_waveforms(const HyperhotConfig& cfg, const HyperhotState& state);
std::vector<double> render_hyperhot(const HyperhotConfig& cfg, const HyperhotState& state);
Observation hyperhot_observe(const HyperhotConfig& cfg, const HyperhotState& state);

/// Policy with access to the full state: dodges nearby enemy bullets,
/// otherwise lines up under the live enemy predicted to be overhead when
/// a bullet arrives and fires.
HyperhotAction hyperhot_scripted_action(const HyperhotConfig& cfg, const HyperhotState& state);

class HyperhotEnv {
public:
    explicit HyperhotEnv(HyperhotConfig cfg = {});

    const HyperhotConfig& config() const noexcept { return cfg_; }
    const HyperhotState& state() const noexcept { return state_; }

    Observation reset(std::uint64_t seed);
    HyperhotStep step(HyperhotAction action) { return hyperhot_step(cfg_, state_, action); }
    bool done() const noexcept { return state_.done; }
    Observation observe() const { return hyperhot_observe(cfg_, state_); }

private:
    HyperhotConfig cfg_;
    HyperhotState state_;
};

}  // namespace muse
