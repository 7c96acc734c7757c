#include "muse/rl/pipeline.hpp"

#include <numbers>

#include "muse/errors.hpp"

namespace muse {

EnvKind parse_env_kind(std::string_view name) {
    if (name == "pendulum") return EnvKind::Pendulum;
    if (name == "hyperhot") return EnvKind::Hyperhot;
    throw ContractError("unknown environment '" + std::string(name) + "' (expected pendulum or hyperhot)");
}

std::string_view env_kind_name(EnvKind kind) noexcept { return kind == EnvKind::Pendulum ? "pendulum" : "hyperhot"; }

std::size_t EnvSpec::image_dim() const noexcept {
    return kind == EnvKind::Pendulum ? pendulum.image_pixels() : hyperhot.image_pixels();
}

std::size_t EnvSpec::image_size() const noexcept {
    return kind == EnvKind::Pendulum ? pendulum.image_size : hyperhot.image_size;
}

std::size_t EnvSpec::sound_dim() const noexcept {
    return kind == EnvKind::Pendulum ? pendulum.sound_dim() : hyperhot.sound_dim();
}

Config EnvSpec::to_config() const {
    Config c = kind == EnvKind::Pendulum ? pendulum.to_config() : hyperhot.to_config();
    c.set("env.name", std::string(env_kind_name(kind)));
    return c;
}

EnvSpec EnvSpec::from_config(const Config& c) {
    EnvSpec e;
    try {
        e.kind = parse_env_kind(c.get_string("env.name", "pendulum"));
    } catch (const ContractError& err) {
        throw ConfigError("env.name", err.what());
    }
    if (e.kind == EnvKind::Pendulum)
        e.pendulum = PendulumConfig::from_config(c);
    else
        e.hyperhot = HyperhotConfig::from_config(c);
    return e;
}

PendulumTask::PendulumTask(PendulumConfig cfg, const ObservationAdapter& adapter, std::array<bool, 2> mask,
                           Rng* training_rng)
    : env_(std::move(cfg)), adapter_(adapter), mask_(mask), training_rng_(training_rng) {
    adapter_.validate();
}

std::vector<double> PendulumTask::encode(Observation obs) {
    obs.available = mask_;
    return latent_observation(adapter_, obs, training_rng_);
}

std::vector<double> PendulumTask::reset(std::uint64_t seed) { return encode(env_.reset(seed)); }

StepResult PendulumTask::step(std::span<const double> action) {
    if (action.size() != 1) throw ShapeError("pendulum: action must have one coordinate");
    StepResult r;
    r.reward = env_.step(action[0]);
    r.done = env_.done();
    r.terminal = false;
    r.observation = encode(env_.observe());
    return r;
}

HyperhotTask::HyperhotTask(HyperhotConfig cfg, const ObservationAdapter& adapter, std::array<bool, 2> mask,
                           Rng* training_rng)
    : env_(std::move(cfg)), adapter_(adapter), mask_(mask), training_rng_(training_rng) {
    adapter_.validate();
}

std::vector<double> HyperhotTask::encode(Observation obs) {
    obs.available = mask_;
    return latent_observation(adapter_, obs, training_rng_);
}

std::vector<double> HyperhotTask::reset(std::uint64_t seed) { return encode(env_.reset(seed)); }

StepResult HyperhotTask::step(std::size_t action) {
    if (action >= kHyperhotActions) throw ContractError("hyperhot: invalid action index");
    const auto s = env_.step(static_cast<HyperhotAction>(action));
    StepResult r;
    r.reward = s.reward;
    r.done = s.done;
    r.terminal = s.done;
    r.observation = encode(env_.observe());
    return r;
}

namespace {

MultimodalDataset empty_env_dataset(std::size_t count, std::size_t image_dim, std::size_t sound_dim) {
    MultimodalDataset ds;
    ds.names = {"image", "sound"};
    ds.split = "train";
    ds.data = {Tensor({count, image_dim}), Tensor({count, sound_dim})};
    return ds;
}

void put_observation(MultimodalDataset& ds, std::size_t row, const Observation& o) {
    std::copy(o.image.begin(), o.image.end(), ds.data[0].row_span(row).begin());
    std::copy(o.sound.begin(), o.sound.end(), ds.data[1].row_span(row).begin());
}

}  // namespace

MultimodalDataset pendulum_dataset(const PendulumConfig& cfg, std::size_t count, std::uint64_t seed) {
    cfg.validate();
    auto ds = empty_env_dataset(count, cfg.image_pixels(), cfg.sound_dim());
    Rng rng = Rng(seed).split("pendulum-dataset");
    for (std::size_t i = 0; i < count; ++i) {
        PendulumState s;
        s.theta = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
        s.theta_dot = rng.uniform(-cfg.max_speed, cfg.max_speed);
        put_observation(ds, i, pendulum_observe(cfg, s));
    }
    return ds;
}

MultimodalDataset hyperhot_dataset(const HyperhotConfig& cfg, std::size_t count, std::uint64_t seed) {
    cfg.validate();
    auto ds = empty_env_dataset(count, cfg.image_pixels(), cfg.sound_dim());
    Rng rng = Rng(seed).split("hyperhot-dataset");
    std::size_t row = 0, episode = 0;
    while (row < count) {
        HyperhotEnv env(cfg);
        env.reset(episode_seed(seed, episode++));
        const double explore = rng.uniform(0.1, 0.9);
        while (!env.done() && row < count) {
            put_observation(ds, row++, env.observe());
            const auto a = rng.uniform() < explore ? static_cast<HyperhotAction>(rng.uniform_int(kHyperhotActions))
                                                   : hyperhot_scripted_action(cfg, env.state());
            env.step(a);
        }
    }
    return ds;
}

MultimodalDataset env_dataset(const EnvSpec& env, std::size_t count, std::uint64_t seed) {
    return env.kind == EnvKind::Pendulum ? pendulum_dataset(env.pendulum, count, seed)
                                         : hyperhot_dataset(env.hyperhot, count, seed);
}

FeatureScaler standardize_sound(MultimodalDataset& dataset) {
    auto& sound = dataset.data.at(dataset.modality_index("sound"));
    const auto scaler = FeatureScaler::fit(sound);
    scaler.apply_rows(sound);
    return scaler;
}

ModelConfig env_model_config(const EnvSpec& env, Variant variant) {
    ModelConfig cfg = env.kind == EnvKind::Pendulum ? pendulum_model_config(env.image_dim(), env.sound_dim())
                                                    : hyperhot_model_config(env.image_dim(), env.sound_dim());
    cfg.variant = variant;
    if (variant == Variant::MuseA) cfg.delta = 0.0;
    return cfg;
}

EvalSummary zero_shot_eval(const DdpgAgent& agent, const ObservationAdapter& adapter, const PendulumConfig& cfg,
                           std::array<bool, 2> mask, std::size_t episodes, std::uint64_t seed) {
    PendulumTask task(cfg, adapter, mask);
    return evaluate_policy(task, [&](std::span<const double> obs) { return agent.act(obs); }, episodes, seed);
}

EvalSummary zero_shot_eval(const DqnAgent& agent, const ObservationAdapter& adapter, const HyperhotConfig& cfg,
                           std::array<bool, 2> mask, std::size_t episodes, std::uint64_t seed) {
    HyperhotTask task(cfg, adapter, mask);
    return evaluate_policy(task, [&](std::span<const double> obs) { return agent.greedy(obs); }, episodes, seed);
}

EvalSummary random_policy_eval(const EnvSpec& env, std::size_t episodes, std::uint64_t seed) {
    ObservationAdapter raw;
    raw.kind = AdapterKind::RawFusion;
    raw.image_dim = env.image_dim();
    raw.sound_dim = env.sound_dim();
    Rng rng = Rng(seed).split("random-policy");
    if (env.kind == EnvKind::Pendulum) {
        PendulumTask task(env.pendulum, raw);
        const double b = task.action_bound();
        return evaluate_policy(
            task, [&](std::span<const double>) { return std::vector<double>{rng.uniform(-b, b)}; }, episodes, seed);
    }
    HyperhotTask task(env.hyperhot, raw);
    return evaluate_policy(
        task, [&](std::span<const double>) { return static_cast<std::size_t>(rng.uniform_int(kHyperhotActions)); },
        episodes, seed);
}

std::string reward_csv(const std::vector<RewardRow>& rows) {
    std::string out = "agent_kind,modality_mask,seed,episode,reward\n";
    for (const auto& r : rows)
        out += r.agent_kind + "," + r.modality_mask + "," + std::to_string(r.seed) + "," + r.episode + "," +
               format_double(r.reward) + "\n";
    return out;
}

}  // namespace muse
