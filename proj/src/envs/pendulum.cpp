#include "muse/envs/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "muse/envs/sound.hpp"
#include "muse/errors.hpp"

namespace muse {

void PendulumConfig::validate() const {
    if (!(gravity > 0.0 && mass > 0.0 && length > 0.0 && dt > 0.0))
        throw ContractError("pendulum: gravity, mass, length and dt must be positive");
    if (!(max_torque > 0.0 && max_speed > 0.0)) throw ContractError("pendulum: torque and speed limits must be positive");
    if (max_steps == 0 || image_size < 4) throw ContractError("pendulum: max_steps >= 1 and image_size >= 4 required");
    if (!(f0 > 0.0 && speed_of_sound > 0.0 && amplitude_k > 0.0))
        throw ContractError("pendulum: f0, speed_of_sound and amplitude_k must be positive");
    if (receivers.empty()) throw ContractError("pendulum: at least one receiver required");
    for (const auto& r : receivers)
        if (std::abs(r.norm() - length) < 1e-9)
            throw ContractError("pendulum: receiver lies on the tip's circle");
    if (max_speed * length >= speed_of_sound) throw ContractError("pendulum: tip speed may reach the speed of sound");
}

Config PendulumConfig::to_config() const {
    Config c;
    c.set("pendulum.gravity", gravity);
    c.set("pendulum.mass", mass);
    c.set("pendulum.length", length);
    c.set("pendulum.dt", dt);
    c.set("pendulum.max_torque", max_torque);
    c.set("pendulum.max_speed", max_speed);
    c.set("pendulum.max_steps", max_steps);
    c.set("pendulum.image_size", image_size);
    c.set("pendulum.f0", f0);
    c.set("pendulum.speed_of_sound", speed_of_sound);
    c.set("pendulum.amplitude_k", amplitude_k);
    std::string rs;
    for (std::size_t i = 0; i < receivers.size(); ++i)
        rs += (i ? "," : "") + format_double(receivers[i].x) + "," + format_double(receivers[i].y);
    c.set("pendulum.receivers", rs);
    return c;
}

PendulumConfig PendulumConfig::from_config(const Config& c) {
    PendulumConfig p;
    p.gravity = c.get_double("pendulum.gravity", p.gravity);
    p.mass = c.get_double("pendulum.mass", p.mass);
    p.length = c.get_double("pendulum.length", p.length);
    p.dt = c.get_double("pendulum.dt", p.dt);
    p.max_torque = c.get_double("pendulum.max_torque", p.max_torque);
    p.max_speed = c.get_double("pendulum.max_speed", p.max_speed);
    p.max_steps = c.get_size("pendulum.max_steps", p.max_steps);
    p.image_size = c.get_size("pendulum.image_size", p.image_size);
    p.f0 = c.get_double("pendulum.f0", p.f0);
    p.speed_of_sound = c.get_double("pendulum.speed_of_sound", p.speed_of_sound);
    p.amplitude_k = c.get_double("pendulum.amplitude_k", p.amplitude_k);
    if (c.has("pendulum.receivers")) {
        const auto items = split_list(c.get_string("pendulum.receivers"));
        if (items.empty() || items.size() % 2 != 0)
            throw ConfigError("pendulum.receivers", "expected x,y pairs");
        p.receivers.clear();
        for (std::size_t i = 0; i < items.size(); i += 2) {
            try {
                p.receivers.push_back({std::stod(items[i]), std::stod(items[i + 1])});
            } catch (const std::exception&) {
                throw ConfigError("pendulum.receivers", "not a number");
            }
        }
    }
    try {
        p.validate();
    } catch (const ContractError& e) {
        throw ConfigError("pendulum", e.what());
    }
    return p;
}

double wrap_angle(double theta) {
    const double two_pi = 2.0 * std::numbers::pi;
    double t = std::fmod(theta + std::numbers::pi, two_pi);
    if (t < 0.0) t += two_pi;
    // t in [0, 2pi) maps to [-pi, pi); move the lower endpoint to +pi.
    double out = t - std::numbers::pi;
    if (out <= -std::numbers::pi) out += two_pi;
    return out;
}

PendulumStep pendulum_step(const PendulumConfig& cfg, const PendulumState& s, double torque) {
    const double u = std::clamp(torque, -cfg.max_torque, cfg.max_torque);
    const double th = wrap_angle(s.theta);
    const double cost = th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u;
    const double acc = 3.0 * cfg.gravity / (2.0 * cfg.length) * std::sin(s.theta) +
                       3.0 / (cfg.mass * cfg.length * cfg.length) * u;
    const double new_dot = std::clamp(s.theta_dot + acc * cfg.dt, -cfg.max_speed, cfg.max_speed);
    PendulumStep out;
    out.state.theta = wrap_angle(s.theta + new_dot * cfg.dt);
    out.state.theta_dot = new_dot;
    out.state.step = s.step + 1;
    out.reward = -cost;
    return out;
}

Vec2 pendulum_tip(const PendulumConfig& cfg, const PendulumState& s) {
    return {-cfg.length * std::sin(s.theta), cfg.length * std::cos(s.theta)};
}

Vec2 pendulum_tip_velocity(const PendulumConfig& cfg, const PendulumState& s) {
    return {-cfg.length * std::cos(s.theta) * s.theta_dot, -cfg.length * std::sin(s.theta) * s.theta_dot};
}

double pendulum_scripted_torque(const PendulumConfig& cfg, const PendulumState& state) {
    const double th = wrap_angle(state.theta), w = state.theta_dot;
    if (std::abs(th) < 0.6) return std::clamp(-(12.0 * th + 2.5 * w), -cfg.max_torque, cfg.max_torque);
    // Energy per unit inertia relative to resting upright; zero on the upright orbit.
    const double omega2 = 3.0 * cfg.gravity / (2.0 * cfg.length);
    const double energy = 0.5 * w * w + omega2 * (std::cos(th) - 1.0);
    if (energy >= 0.0) return 0.0;
    return w >= 0.0 ? cfg.max_torque : -cfg.max_torque;
}

std::vector<double> render_pendulum(const PendulumConfig& cfg, const PendulumState& s) {
    const std::size_t n = cfg.image_size;
    const double size = static_cast<double>(n);
    const double centre = (size - 1.0) / 2.0;
    const double rod = 0.45 * size;
    const double half_width = 1.0;
    const double ux = -std::sin(s.theta), uy = std::cos(s.theta);
    std::vector<double> img(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double x = static_cast<double>(c) - centre;
            const double y = centre - static_cast<double>(r);
            const double along = std::clamp(x * ux + y * uy, 0.0, rod);
            const double d = std::hypot(x - along * ux, y - along * uy);
            img[r * n + c] = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        }
    return img;
}

std::vector<double> pendulum_sound(const PendulumConfig& cfg, const PendulumState& s) {
    const Vec2 tip = pendulum_tip(cfg, s);
    const Vec2 vel = pendulum_tip_velocity(cfg, s);
    std::vector<double> out;
    out.reserve(cfg.sound_dim());
    for (const auto& r : cfg.receivers) {
        const double closest = std::abs(r.norm() - cfg.length);
        const double norm = cfg.amplitude_k / (closest * closest);
        out.push_back(doppler_frequency(cfg.f0, tip, vel, r, {}, cfg.speed_of_sound) / cfg.f0);
        out.push_back(inverse_square_amplitude(cfg.amplitude_k, tip, r) / norm);
    }
    return out;
}

Observation pendulum_observe(const PendulumConfig& cfg, const PendulumState& s) {
    Observation o;
    o.image = render_pendulum(cfg, s);
    o.height = o.width = cfg.image_size;
    o.sound = pendulum_sound(cfg, s);
    return o;
}

PendulumEnv::PendulumEnv(PendulumConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Observation PendulumEnv::reset(std::uint64_t seed) {
    Rng rng = Rng(seed).split("pendulum-reset");
    state_ = {};
    state_.theta = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    state_.theta_dot = rng.uniform(-1.0, 1.0);
    return observe();
}

Observation PendulumEnv::reset_to(const PendulumState& state) {
    state_ = state;
    state_.theta = wrap_angle(state_.theta);
    state_.theta_dot = std::clamp(state_.theta_dot, -cfg_.max_speed, cfg_.max_speed);
    return observe();
}

double PendulumEnv::step(double torque) {
    if (done()) throw ContractError("pendulum: step after the episode ended");
    const auto r = pendulum_step(cfg_, state_, torque);
    state_ = r.state;
    return r.reward;
}

}  // namespace muse
