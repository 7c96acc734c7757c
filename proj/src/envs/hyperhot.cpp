#include "muse/envs/hyperhot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "muse/errors.hpp"

namespace muse {

namespace {

double march_offset(const HyperhotConfig& cfg, std::size_t time) {
    return cfg.march_amplitude *
           std::sin(2.0 * std::numbers::pi * static_cast<double>(time) / static_cast<double>(cfg.march_period));
}

double enemy_base_x(const HyperhotConfig& cfg, std::size_t index) {
    const std::size_t g = index / cfg.enemies_per_group, i = index % cfg.enemies_per_group;
    return (g == 0 ? cfg.left_group_x : cfg.right_group_x) + static_cast<double>(i) * cfg.enemy_spacing;
}

std::size_t next_fire_time(const HyperhotConfig& cfg, std::size_t now, Rng& rng) {
    const auto j = static_cast<std::int64_t>(rng.uniform_int(2 * cfg.fire_jitter + 1)) -
                   static_cast<std::int64_t>(cfg.fire_jitter);
    return now + static_cast<std::size_t>(std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.fire_interval) + j));
}

bool inside_arena(Vec2 p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

double agent_min_x(const HyperhotConfig& cfg) { return cfg.agent_hit_dx; }
double agent_max_x(const HyperhotConfig& cfg) { return 1.0 - cfg.agent_hit_dx; }

// Accumulates `value` times the pixel coverage of an axis-aligned box.
void draw_box(std::vector<double>& img, std::size_t n, Vec2 centre, double hw, double hh, double value) {
    const double s = static_cast<double>(n);
    const double x0 = (centre.x - hw) * s, x1 = (centre.x + hw) * s;
    const double r0 = (1.0 - centre.y - hh) * s, r1 = (1.0 - centre.y + hh) * s;
    const auto lo = [](double v) { return static_cast<std::ptrdiff_t>(std::floor(v)); };
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, lo(r0)); r <= std::min<std::ptrdiff_t>(n - 1, lo(r1)); ++r)
        for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, lo(x0)); c <= std::min<std::ptrdiff_t>(n - 1, lo(x1)); ++c) {
            const double ox = std::min(x1, c + 1.0) - std::max(x0, static_cast<double>(c));
            const double oy = std::min(r1, r + 1.0) - std::max(r0, static_cast<double>(r));
            if (ox <= 0.0 || oy <= 0.0) continue;
            auto& px = img[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c)];
            px = std::max(px, value * std::min(1.0, ox * oy));
        }
}

}  // namespace

void HyperhotConfig::validate() const {
    if (image_size < 8) throw ContractError("hyperhot: image_size must be at least 8");
    if (enemies_per_group == 0) throw ContractError("hyperhot: enemies_per_group must be positive");
    if (march_period == 0 || fire_interval == 0 || episode_limit == 0)
        throw ContractError("hyperhot: march_period, fire_interval and episode_limit must be positive");
    if (fire_jitter >= fire_interval) throw ContractError("hyperhot: fire_jitter must be below fire_interval");
    if (!(agent_speed > 0.0 && agent_bullet_speed > 0.0 && enemy_bullet_speed > 0.0))
        throw ContractError("hyperhot: speeds must be positive");
    if (agent_bullet_speed >= 2.0 * enemy_hit_dy || enemy_bullet_speed >= 2.0 * agent_hit_dy)
        throw ContractError("hyperhot: bullets would skip over hit boxes");
    for (std::size_t i = 0; i < 2 * enemies_per_group; ++i) {
        const double x = enemy_base_x(*this, i);
        if (x - march_amplitude < 0.0 || x + march_amplitude > 1.0)
            throw ContractError("hyperhot: enemy formation leaves the arena");
    }
    if (!(enemy_y > agent_y && enemy_y < 1.0 && agent_y > 0.0))
        throw ContractError("hyperhot: need 0 < agent_y < enemy_y < 1");
    if (receivers.empty()) throw ContractError("hyperhot: at least one receiver required");
    if (sound.class_frequencies.size() != 4 || sound.class_amplitudes.size() != 4)
        throw ContractError("hyperhot: exactly four sound classes required");
    if (!(sound.max_amplitude > 0.0 && sound.sample_rate > 0.0 && sound.samples > 0 && sound.decay >= 0.0))
        throw ContractError("hyperhot: invalid sound parameters");
}

Config HyperhotConfig::to_config() const {
    Config c;
    c.set("hyperhot.image_size", image_size);
    c.set("hyperhot.enemies_per_group", enemies_per_group);
    c.set("hyperhot.enemy_y", enemy_y);
    c.set("hyperhot.enemy_spacing", enemy_spacing);
    c.set("hyperhot.left_group_x", left_group_x);
    c.set("hyperhot.right_group_x", right_group_x);
    c.set("hyperhot.march_amplitude", march_amplitude);
    c.set("hyperhot.march_period", march_period);
    c.set("hyperhot.fire_interval", fire_interval);
    c.set("hyperhot.fire_jitter", fire_jitter);
    c.set("hyperhot.agent_cooldown", agent_cooldown);
    c.set("hyperhot.episode_limit", episode_limit);
    c.set("hyperhot.agent_y", agent_y);
    c.set("hyperhot.agent_speed", agent_speed);
    c.set("hyperhot.agent_bullet_speed", agent_bullet_speed);
    c.set("hyperhot.enemy_bullet_speed", enemy_bullet_speed);
    c.set("hyperhot.enemy_hit_dx", enemy_hit_dx);
    c.set("hyperhot.enemy_hit_dy", enemy_hit_dy);
    c.set("hyperhot.agent_hit_dx", agent_hit_dx);
    c.set("hyperhot.agent_hit_dy", agent_hit_dy);
    std::string rs;
    for (std::size_t i = 0; i < receivers.size(); ++i)
        rs += (i ? "," : "") + format_double(receivers[i].x) + "," + format_double(receivers[i].y);
    c.set("hyperhot.receivers", rs);
    const auto join = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
        return s;
    };
    c.set("hyperhot.class_frequencies", join(sound.class_frequencies));
    c.set("hyperhot.class_amplitudes", join(sound.class_amplitudes));
    c.set("hyperhot.sound_decay", sound.decay);
    c.set("hyperhot.max_amplitude", sound.max_amplitude);
    c.set("hyperhot.sound_samples", sound.samples);
    c.set("hyperhot.sample_rate", sound.sample_rate);
    return c;
}

HyperhotConfig HyperhotConfig::from_config(const Config& c) {
    HyperhotConfig h;
    h.image_size = c.get_size("hyperhot.image_size", h.image_size);
    h.enemies_per_group = c.get_size("hyperhot.enemies_per_group", h.enemies_per_group);
    h.enemy_y = c.get_double("hyperhot.enemy_y", h.enemy_y);
    h.enemy_spacing = c.get_double("hyperhot.enemy_spacing", h.enemy_spacing);
    h.left_group_x = c.get_double("hyperhot.left_group_x", h.left_group_x);
    h.right_group_x = c.get_double("hyperhot.right_group_x", h.right_group_x);
    h.march_amplitude = c.get_double("hyperhot.march_amplitude", h.march_amplitude);
    h.march_period = c.get_size("hyperhot.march_period", h.march_period);
    h.fire_interval = c.get_size("hyperhot.fire_interval", h.fire_interval);
    h.fire_jitter = c.get_size("hyperhot.fire_jitter", h.fire_jitter);
    h.agent_cooldown = c.get_size("hyperhot.agent_cooldown", h.agent_cooldown);
    h.episode_limit = c.get_size("hyperhot.episode_limit", h.episode_limit);
    h.agent_y = c.get_double("hyperhot.agent_y", h.agent_y);
    h.agent_speed = c.get_double("hyperhot.agent_speed", h.agent_speed);
    h.agent_bullet_speed = c.get_double("hyperhot.agent_bullet_speed", h.agent_bullet_speed);
    h.enemy_bullet_speed = c.get_double("hyperhot.enemy_bullet_speed", h.enemy_bullet_speed);
    h.enemy_hit_dx = c.get_double("hyperhot.enemy_hit_dx", h.enemy_hit_dx);
    h.enemy_hit_dy = c.get_double("hyperhot.enemy_hit_dy", h.enemy_hit_dy);
    h.agent_hit_dx = c.get_double("hyperhot.agent_hit_dx", h.agent_hit_dx);
    h.agent_hit_dy = c.get_double("hyperhot.agent_hit_dy", h.agent_hit_dy);
    const auto doubles = [&](const std::string& key) {
        std::vector<double> out;
        for (const auto& item : split_list(c.get_string(key))) {
            try {
                std::size_t used = 0;
                out.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError(key, "not a list of numbers");
            }
        }
        return out;
    };
    if (c.has("hyperhot.receivers")) {
        const auto v = doubles("hyperhot.receivers");
        if (v.empty() || v.size() % 2 != 0) throw ConfigError("hyperhot.receivers", "expected x,y pairs");
        h.receivers.clear();
        for (std::size_t i = 0; i < v.size(); i += 2) h.receivers.push_back({v[i], v[i + 1]});
    }
    if (c.has("hyperhot.class_frequencies")) h.sound.class_frequencies = doubles("hyperhot.class_frequencies");
    if (c.has("hyperhot.class_amplitudes")) h.sound.class_amplitudes = doubles("hyperhot.class_amplitudes");
    h.sound.decay = c.get_double("hyperhot.sound_decay", h.sound.decay);
    h.sound.max_amplitude = c.get_double("hyperhot.max_amplitude", h.sound.max_amplitude);
    h.sound.samples = c.get_size("hyperhot.sound_samples", h.sound.samples);
    h.sound.sample_rate = c.get_double("hyperhot.sample_rate", h.sound.sample_rate);
    try {
        h.validate();
    } catch (const ContractError& e) {
        throw ConfigError("hyperhot", e.what());
    }
    return h;
}

std::size_t HyperhotState::live_enemies() const noexcept {
    return static_cast<std::size_t>(std::count_if(enemies.begin(), enemies.end(), [](const Enemy& e) { return e.alive; }));
}

HyperhotState hyperhot_initial_state(const HyperhotConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    HyperhotState s;
    s.agent_x = 0.5;
    s.fire_rng = Rng(seed).split("hyperhot-fire");
    const double off = march_offset(cfg, 0);
    for (std::size_t i = 0; i < 2 * cfg.enemies_per_group; ++i)
        s.enemies.push_back({{enemy_base_x(cfg, i) + off, cfg.enemy_y},
                             i < cfg.enemies_per_group ? EnemyGroup::Left : EnemyGroup::Right,
                             true});
    s.next_fire = next_fire_time(cfg, 0, s.fire_rng);
    return s;
}

HyperhotStep hyperhot_step(const HyperhotConfig& cfg, HyperhotState& s, HyperhotAction action) {
    if (s.done) throw ContractError("hyperhot: step after the episode ended");
    if (static_cast<std::size_t>(action) >= kHyperhotActions) throw ContractError("hyperhot: invalid action");

    switch (action) {
        case HyperhotAction::Left: s.agent_x -= cfg.agent_speed; break;
        case HyperhotAction::Right: s.agent_x += cfg.agent_speed; break;
        default: break;
    }
    s.agent_x = std::clamp(s.agent_x, agent_min_x(cfg), agent_max_x(cfg));
    if (action == HyperhotAction::Shoot && s.cooldown == 0) {
        s.bullets.push_back({{s.agent_x, cfg.agent_y}, {0.0, cfg.agent_bullet_speed}, BulletOwner::Agent});
        s.cooldown = cfg.agent_cooldown;
    } else if (s.cooldown > 0) {
        --s.cooldown;
    }

    ++s.time;
    const double off = march_offset(cfg, s.time);
    for (std::size_t i = 0; i < s.enemies.size(); ++i) s.enemies[i].position.x = enemy_base_x(cfg, i) + off;

    for (auto& b : s.bullets) b.position = b.position + b.velocity;
    std::erase_if(s.bullets, [](const Bullet& b) { return !inside_arena(b.position); });

    std::erase_if(s.bullets, [&](const Bullet& b) {
        if (b.owner != BulletOwner::Agent) return false;
        for (auto& e : s.enemies) {
            if (e.alive && std::abs(e.position.x - b.position.x) < cfg.enemy_hit_dx &&
                std::abs(e.position.y - b.position.y) < cfg.enemy_hit_dy) {
                e.alive = false;
                return true;
            }
        }
        return false;
    });

    const std::size_t live = s.live_enemies();
    if (live > 0 && s.time >= s.next_fire) {
        std::size_t pick = s.fire_rng.uniform_int(live);
        for (const auto& e : s.enemies) {
            if (!e.alive) continue;
            if (pick-- == 0) {
                s.bullets.push_back({{e.position.x, e.position.y}, {0.0, -cfg.enemy_bullet_speed}, BulletOwner::Enemy});
                break;
            }
        }
        s.next_fire = next_fire_time(cfg, s.time, s.fire_rng);
    }

    bool hit = false;
    for (const auto& b : s.bullets)
        if (b.owner == BulletOwner::Enemy && std::abs(b.position.x - s.agent_x) < cfg.agent_hit_dx &&
            std::abs(b.position.y - cfg.agent_y) < cfg.agent_hit_dy)
            hit = true;

    HyperhotStep out;
    if (live == 0) {
        out = {10.0, true};
    } else if (hit || s.time >= cfg.episode_limit) {
        out = {-1.0, true};
    }
    s.done = out.done;
    return out;
}

std::vector<ToneEmitter> hyperhot_emitters(const HyperhotState& s) {
    std::vector<ToneEmitter> out;
    for (const auto& e : s.enemies)
        if (e.alive) out.push_back({e.position, static_cast<std::size_t>(e.group)});
    for (const auto& b : s.bullets) out.push_back({b.position, b.owner == BulletOwner::Enemy ? 2u : 3u});
    return out;
}

std::vector<double> hyperhot_sound(const HyperhotConfig& cfg, const HyperhotState& s) {
    std::vector<SoundReceiver> rs;
    for (const auto& p : cfg.receivers) rs.push_back({p, {}});
    return sound_field_features(cfg.sound, hyperhot_emitters(s), rs);
}

std::vector<std::vector<std::int16_t>> hyperhot_waveforms(const HyperhotConfig& cfg, const HyperhotState& s) {
    const auto em = hyperhot_emitters(s);
    std::vector<std::vector<std::int16_t>> out;
    for (const auto& p : cfg.receivers) out.push_back(synthesize_waveform(cfg.sound, em, p));
    return out;
}

std::vector<double> render_hyperhot(const HyperhotConfig& cfg, const HyperhotState& s) {
    const std::size_t n = cfg.image_size;
    std::vector<double> img(n * n, 0.0);
    for (const auto& e : s.enemies)
        if (e.alive) draw_box(img, n, e.position, 0.04, 0.03, 0.6);
    for (const auto& b : s.bullets)
        draw_box(img, n, b.position, 0.016, 0.03, b.owner == BulletOwner::Enemy ? 0.35 : 0.85);
    draw_box(img, n, {s.agent_x, cfg.agent_y}, 0.05, 0.03, 1.0);
    return img;
}

Observation hyperhot_observe(const HyperhotConfig& cfg, const HyperhotState& s) {
    Observation o;
    o.image = render_hyperhot(cfg, s);
    o.height = o.width = cfg.image_size;
    o.sound = hyperhot_sound(cfg, s);
    return o;
}

HyperhotAction hyperhot_scripted_action(const HyperhotConfig& cfg, const HyperhotState& s) {
    // Threat: an enemy bullet that would hit the agent at position x within
    // the next few frames if the agent stood still there.
    const auto threat = [&](double x) {
        double worst = 0.0;
        for (const auto& b : s.bullets) {
            if (b.owner != BulletOwner::Enemy) continue;
            const double frames = (b.position.y - cfg.agent_y) / cfg.enemy_bullet_speed;
            if (frames < -1.0 || frames > 12.0) continue;
            const double gap = std::abs(b.position.x - x);
            if (gap < cfg.agent_hit_dx + 0.03) worst = std::max(worst, 1.0 + (cfg.agent_hit_dx + 0.03 - gap));
        }
        return worst;
    };
    const auto moved = [&](HyperhotAction a) {
        double x = s.agent_x;
        if (a == HyperhotAction::Left) x -= cfg.agent_speed;
        if (a == HyperhotAction::Right) x += cfg.agent_speed;
        return std::clamp(x, agent_min_x(cfg), agent_max_x(cfg));
    };

    if (threat(s.agent_x) > 0.0) {
        HyperhotAction best = HyperhotAction::Noop;
        double best_threat = threat(s.agent_x);
        for (auto a : {HyperhotAction::Left, HyperhotAction::Right}) {
            const double t = threat(moved(a));
            // Look one more move ahead so the agent does not stop inside the danger zone.
            const double x2 = std::clamp(moved(a) + (a == HyperhotAction::Left ? -1.0 : 1.0) * cfg.agent_speed,
                                         agent_min_x(cfg), agent_max_x(cfg));
            const double score = t + 0.5 * threat(x2);
            if (score < best_threat) {
                best_threat = score;
                best = a;
            }
        }
        return best;
    }

    // Predicted hit of a bullet fired now from x.
    const auto would_hit = [&](double x) {
        double y = cfg.agent_y;
        for (std::size_t k = 1; y <= 1.0 && k < 200; ++k) {
            y += cfg.agent_bullet_speed;
            const double off = march_offset(cfg, s.time + k);
            for (std::size_t i = 0; i < s.enemies.size(); ++i) {
                if (!s.enemies[i].alive) continue;
                if (std::abs(enemy_base_x(cfg, i) + off - x) < 0.7 * cfg.enemy_hit_dx &&
                    std::abs(cfg.enemy_y - y) < cfg.enemy_hit_dy)
                    return true;
            }
        }
        return false;
    };
    if (s.cooldown == 0 && would_hit(s.agent_x)) return HyperhotAction::Shoot;

    // Move toward the enemy whose predicted position at bullet arrival is nearest.
    const double flight = (cfg.enemy_y - cfg.agent_y) / cfg.agent_bullet_speed;
    const double off = march_offset(cfg, s.time + static_cast<std::size_t>(std::lround(flight)) + 1);
    double target = s.agent_x, best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.enemies.size(); ++i) {
        if (!s.enemies[i].alive) continue;
        const double x = enemy_base_x(cfg, i) + off;
        if (std::abs(x - s.agent_x) < best) {
            best = std::abs(x - s.agent_x);
            target = x;
        }
    }
    HyperhotAction move = HyperhotAction::Noop;
    if (target < s.agent_x - 0.5 * cfg.agent_speed) move = HyperhotAction::Left;
    if (target > s.agent_x + 0.5 * cfg.agent_speed) move = HyperhotAction::Right;
    if (threat(moved(move)) > 0.0) return HyperhotAction::Noop;
    return move;
}

HyperhotEnv::HyperhotEnv(HyperhotConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Observation HyperhotEnv::reset(std::uint64_t seed) {
    state_ = hyperhot_initial_state(cfg_, seed);
    return observe();
}

}  // namespace muse
