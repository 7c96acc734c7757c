#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cli_settings.hpp"
#include "muse/errors.hpp"
#include "muse/gradcheck_suite.hpp"
#include "muse/likelihood.hpp"
#include "muse/model.hpp"
#include "muse/rl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace muse;
using muse::cli::CheckFailure;
using muse::cli::OutputDir;
using muse::cli::Settings;

namespace {

constexpr const char* kCheckpoint = "model.pst";
constexpr const char* kAgent = "agent.pst";
constexpr const char* kAdapter = "adapter.cfg";

fs::path scaler_path(const fs::path& checkpoint) { return checkpoint.string() + ".scaler"; }

/// A directory argument names the artifact inside it.
fs::path resolve(const fs::path& p, const char* file) { return fs::is_directory(p) ? p / file : p; }

fs::path existing_path(Settings& s, const std::string& key, const char* file = nullptr) {
    const fs::path p = file ? resolve(s.required(key), file) : fs::path(s.required(key));
    if (!fs::exists(p)) throw ConfigError(key, "no such file: " + p.string());
    return p;
}

template <class F>
auto as_config_error(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ContractError& e) {
        throw ConfigError(key, e.what());
    }
}

EnvSpec read_env(Settings& s, const std::optional<std::string>& forced_name) {
    Config c = s.slice({"env.", "pendulum.", "hyperhot."});
    if (forced_name) {
        if (c.has("env.name") && c.get_string("env.name") != *forced_name)
            throw ConfigError("env.name", "conflicts with data.source");
        c.set("env.name", *forced_name);
    }
    const EnvSpec spec = EnvSpec::from_config(c);
    as_config_error("env", [&] {
        spec.kind == EnvKind::Pendulum ? spec.pendulum.validate() : spec.hyperhot.validate();
        return 0;
    });
    s.absorb({"env.", "pendulum.", "hyperhot."}, spec.to_config());
    return spec;
}

struct LoadedData {
    MultimodalDataset dataset;
    std::optional<EnvSpec> env;
    std::size_t image_size = 0;
};

/// data.source selects the dataset; `model` (when evaluating) supplies
/// defaults that match its dimensions.
LoadedData load_data(Settings& s, const MuseModel* model, std::size_t default_count) {
    LoadedData out;
    const std::string source = s.str("data.source", "synthetic");
    if (source == "synthetic") {
        std::size_t side = 16;
        if (model) {
            const auto& m = model->config.modalities.front();
            side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m.data_dim))));
        }
        const std::size_t count = s.size("data.count", default_count);
        out.image_size = s.size("data.image_size", side);
        const double noise = s.num("data.noise_sd", 0.05);
        const std::uint64_t seed = s.u64("data.seed", s.seed());
        out.dataset = as_config_error("data", [&] { return make_synthetic_bars(count, out.image_size, noise, seed); });
    } else if (source == "mnist") {
        const fs::path images = existing_path(s, "data.images");
        const fs::path labels = existing_path(s, "data.labels");
        const std::size_t limit = s.size("data.limit", 10000);
        try {
            out.dataset = load_mnist_pair(images, labels, limit);
        } catch (const ParseError& e) {
            throw ConfigError("data.images", e.what());
        }
    } else if (source == "pendulum" || source == "hyperhot") {
        out.env = read_env(s, source);
        const std::size_t count = s.size("data.count", default_count);
        const std::uint64_t seed = s.u64("data.seed", s.seed());
        out.dataset = env_dataset(*out.env, count, seed);
        out.image_size = out.env->image_size();
    } else {
        throw ConfigError("data.source", "unknown source '" + source + "'");
    }
    return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string s;
    for (const auto& i : items) s += (s.empty() ? "" : sep) + i;
    return s;
}

void check_dataset_matches(const MuseModel& model, const MultimodalDataset& data) {
    if (data.modality_count() != model.modality_count())
        throw ArtifactMismatch("dataset has " + std::to_string(data.modality_count()) + " modalities, model has " +
                               std::to_string(model.modality_count()));
    for (std::size_t m = 0; m < model.modality_count(); ++m) {
        if (data.names[m] != model.spec(m).name || data.data[m].cols() != model.spec(m).data_dim)
            throw ArtifactMismatch("dataset modality '" + data.names[m] + "' (" + std::to_string(data.data[m].cols()) +
                                   ") does not match model modality '" + model.spec(m).name + "' (" +
                                   std::to_string(model.spec(m).data_dim) + ")");
    }
}

MuseModel load_model(const fs::path& path) {
    try {
        return load_checkpoint(path);
    } catch (const ParseError& e) {
        throw ArtifactMismatch(e.what());
    } catch (const ConfigError& e) {
        throw ArtifactMismatch(e.what());
    }
}

FeatureScaler load_scaler(const fs::path& checkpoint) {
    if (!fs::exists(scaler_path(checkpoint))) return {};
    return FeatureScaler::from_config(Config::load(scaler_path(checkpoint)), "sound");
}

// ---------------------------------------------------------------- train-model

int cmd_train_model(Settings& s, const fs::path& out_path, bool force) {
    auto data = load_data(s, nullptr, 2000);
    FeatureScaler scaler;
    if (data.env) scaler = standardize_sound(data.dataset);

    const Variant variant = as_config_error("model.variant", [&] { return parse_variant(s.str("model.variant", "muse")); });
    ModelConfig preset;
    const std::string source = s.user().get_string("data.source", "synthetic");
    if (source == "synthetic")
        preset = synthetic_model_config(data.image_size);
    else if (source == "mnist")
        preset = mnist_model_config();
    else
        preset = env_model_config(*data.env, variant);
    preset.variant = variant;
    if (variant == Variant::MuseA) preset.delta = 0.0;
    preset.seed = s.seed();
    Config mc = preset.to_config();
    mc.merge(s.slice({"model.", "modality."}));
    ModelConfig config = ModelConfig::from_config(mc);
    as_config_error("model", [&] {
        config.validate();
        return 0;
    });
    s.absorb({"model.", "modality."}, config.to_config());

    TrainConfig tc;
    tc.epochs = s.size("train.epochs", tc.epochs);
    tc.batch_size = s.size("train.batch_size", tc.batch_size);
    tc.learning_rate = s.num("train.learning_rate", tc.learning_rate);
    tc.shuffle = s.flag("train.shuffle", tc.shuffle);
    tc.seed = s.u64("train.seed", s.seed());
    if (tc.batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
    s.finish();

    MuseModel model = build_variant(variant, config);
    check_dataset_matches(model, data.dataset);
    OutputDir dir(out_path, force);
    const TrainLog log = fit(model, data.dataset, tc);

    std::string csv = "epoch,bottom,top,alma,total\n";
    for (const auto& e : log.epochs)
        csv += std::to_string(e.epoch) + "," + format_double(e.bottom) + "," + format_double(e.top) + "," +
               format_double(e.alma) + "," + format_double(e.total) + "\n";
    dir.write_text("losses.csv", csv);
    save_checkpoint(model, dir / kCheckpoint);
    if (data.env) scaler.to_config("sound").save(scaler_path(dir / kCheckpoint));
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    if (log.diverged) throw CheckFailure("training diverged: " + log.divergence);
    return 0;
}

// ------------------------------------------------------------ eval-likelihood

int cmd_eval_likelihood(Settings& s, const fs::path& out_path, bool force) {
    const fs::path ckpt = existing_path(s, "eval.checkpoint", kCheckpoint);
    const MuseModel model = load_model(ckpt);
    auto data = load_data(s, &model, 500);
    if (data.env) load_scaler(ckpt).apply_rows(data.dataset.data[data.dataset.modality_index("sound")]);

    IwOptions opt;
    opt.num_samples = s.size("eval.num_samples", 1000);
    if (opt.num_samples == 0) throw ConfigError("eval.num_samples", "must be positive");
    opt.seed = s.u64("eval.seed", s.seed());
    const auto metrics = s.list("eval.metrics", {"marginal", "joint", "conditional"});
    std::vector<std::string> names;
    for (const auto& m : model.config.modalities) names.push_back(m.name);
    const auto targets = s.list("eval.modalities", names);
    for (const auto& m : metrics)
        if (m != "marginal" && m != "joint" && m != "conditional")
            throw ConfigError("eval.metrics", "unknown metric '" + m + "'");
    std::vector<std::size_t> target_idx;
    for (const auto& t : targets)
        target_idx.push_back(as_config_error("eval.modalities", [&] { return model.config.modality_index(t); }));
    s.finish();
    check_dataset_matches(model, data.dataset);

    OutputDir dir(out_path, force);
    std::vector<IwRow> rows;
    const auto push = [&](const std::string& metric, const std::string& modality, const IwEstimate& e) {
        rows.push_back({metric, modality, e.num_samples, e.value, e.std_error, opt.seed});
    };
    for (const auto& metric : metrics) {
        if (metric == "marginal") {
            for (auto m : target_idx)
                push(metric, names[m], iw_marginal(model, m, data.dataset.data[m], opt));
        } else if (metric == "joint") {
            push(metric, join(names, "+"), iw_joint(model, data.dataset, opt));
        } else {
            for (auto t : target_idx) {
                std::vector<std::size_t> sources;
                std::vector<std::string> source_names;
                for (std::size_t m = 0; m < names.size(); ++m)
                    if (m != t) {
                        sources.push_back(m);
                        source_names.push_back(names[m]);
                    }
                if (sources.empty()) continue;
                push(metric, names[t] + "|" + join(source_names, "+"),
                     iw_conditional(model, t, sources, data.dataset, opt));
            }
        }
    }
    dir.write_text("likelihood.csv", iw_csv(rows));
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    for (const auto& r : rows)
        if (!std::isfinite(r.value)) throw CheckFailure("non-finite " + r.metric + " for " + r.modality);
    return 0;
}

// ------------------------------------------------------------------- generate

Tensor parse_input(Settings& s, const ModalitySpec& spec, std::size_t count) {
    const std::string key = "generate.input." + spec.name;
    const auto items = s.list(key, {});
    if (items.empty()) throw ConfigError(key, "required for every source");
    std::vector<double> values;
    try {
        for (const auto& i : items) values.push_back(std::stod(i));
    } catch (const std::exception&) {
        throw ConfigError(key, "not a list of numbers");
    }
    if (spec.likelihood == LikelihoodKind::Categorical && values.size() == 1) {
        const double c = values.front();
        if (c < 0 || c >= static_cast<double>(spec.data_dim) || c != std::floor(c))
            throw ConfigError(key, "class index out of range");
        values.assign(spec.data_dim, 0.0);
        values[static_cast<std::size_t>(c)] = 1.0;
    }
    if (values.size() != spec.data_dim)
        throw ConfigError(key, "expected " + std::to_string(spec.data_dim) + " values");
    Tensor t({count, spec.data_dim});
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < spec.data_dim; ++c) t.at(r, c) = values[c];
    return t;
}

int cmd_generate(Settings& s, const fs::path& out_path, bool force) {
    const fs::path ckpt = existing_path(s, "generate.checkpoint", kCheckpoint);
    const MuseModel model = load_model(ckpt);
    const auto sources = s.list("generate.sources", {});
    if (sources.empty()) throw ConfigError("generate.sources", "empty; at least one source modality is required");
    const std::string target_name = s.required("generate.target");
    const std::size_t target =
        as_config_error("generate.target", [&] { return model.config.modality_index(target_name); });
    const std::size_t count = s.size("generate.count", 8);
    if (count == 0) throw ConfigError("generate.count", "must be positive");
    const std::string mode = s.str("generate.mode", "sample");
    if (mode != "sample" && mode != "mean") throw ConfigError("generate.mode", "expected sample or mean");
    std::map<std::size_t, Tensor> inputs;
    for (const auto& name : sources) {
        const std::size_t m = as_config_error("generate.sources", [&] { return model.config.modality_index(name); });
        inputs.emplace(m, parse_input(s, model.spec(m), count));
    }
    s.finish();

    OutputDir dir(out_path, force);
    Rng rng = Rng(s.seed()).split("generate");
    const Tensor gen = cross_modal_generate(model, inputs, target,
                                            mode == "mean" ? GenerateMode::Mean : GenerateMode::Sample, &rng);
    const auto& spec = model.spec(target);
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(spec.data_dim))));
    const bool image = spec.likelihood == LikelihoodKind::Bernoulli && side * side == spec.data_dim;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string stem = "sample_" + std::to_string(i) + "_" + target_name;
        if (image) {
            write_pgm(dir / (stem + ".pgm"), gen.row_span(i), side, side);
        } else {
            std::string header, row;
            for (std::size_t c = 0; c < spec.data_dim; ++c) {
                header += (c ? "," : "") + ("x" + std::to_string(c));
                row += (c ? "," : "") + format_double(gen.at(i, c));
            }
            dir.write_text(stem + ".csv", header + "\n" + row + "\n");
        }
    }
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    return 0;
}

// ------------------------------------------------------------------------ env

std::string frame_name(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04zu.pgm", step);
    return buf;
}

std::string csv_row(std::size_t step, const std::vector<double>& values) {
    std::string row = std::to_string(step);
    for (double v : values) row += "," + format_double(v);
    return row + "\n";
}

std::string sound_header(std::size_t dim) {
    std::string h = "step";
    for (std::size_t i = 0; i < dim; ++i) h += ",s" + std::to_string(i);
    return h + "\n";
}

int cmd_env(Settings& s, const fs::path& out_path, bool force) {
    const EnvSpec env = read_env(s, std::nullopt);
    const std::size_t steps = s.size("rollout.steps", 10);
    const std::string policy = s.str("rollout.policy", "scripted");
    if (policy != "scripted" && policy != "random" && policy != "zero")
        throw ConfigError("rollout.policy", "expected scripted, random or zero");
    const bool waveforms = env.kind == EnvKind::Hyperhot && s.flag("rollout.waveforms", false);
    const std::uint64_t seed = s.u64("rollout.seed", s.seed());
    s.finish();

    OutputDir dir(out_path, force);
    Rng rng = Rng(seed).split("rollout");
    std::string sound = sound_header(env.sound_dim());
    std::string rewards = "step,action,reward,done\n";
    std::string waves;
    if (env.kind == EnvKind::Pendulum) {
        PendulumEnv e(env.pendulum);
        Observation obs = e.reset(seed);
        for (std::size_t t = 0; t < steps && !e.done(); ++t) {
            write_pgm(dir / frame_name(t), obs.image, obs.height, obs.width);
            sound += csv_row(t, obs.sound);
            const double bound = env.pendulum.max_torque;
            const double torque = policy == "scripted" ? pendulum_scripted_torque(env.pendulum, e.state())
                                  : policy == "random" ? rng.uniform(-bound, bound)
                                                       : 0.0;
            const double r = e.step(torque);
            rewards += std::to_string(t) + "," + format_double(torque) + "," + format_double(r) + "," +
                       (e.done() ? "true" : "false") + "\n";
            obs = e.observe();
        }
    } else {
        HyperhotEnv e(env.hyperhot);
        Observation obs = e.reset(seed);
        if (waveforms) waves = "step,receiver,samples\n";
        for (std::size_t t = 0; t < steps && !e.done(); ++t) {
            write_pgm(dir / frame_name(t), obs.image, obs.height, obs.width);
            sound += csv_row(t, obs.sound);
            if (waveforms) {
                const auto w = hyperhot_waveforms(env.hyperhot, e.state());
                for (std::size_t r = 0; r < w.size(); ++r) {
                    waves += std::to_string(t) + "," + std::to_string(r) + ",";
                    for (std::size_t i = 0; i < w[r].size(); ++i) waves += (i ? " " : "") + std::to_string(w[r][i]);
                    waves += "\n";
                }
            }
            const HyperhotAction a = policy == "scripted" ? hyperhot_scripted_action(env.hyperhot, e.state())
                                     : policy == "random"
                                         ? static_cast<HyperhotAction>(rng.uniform_int(kHyperhotActions))
                                         : HyperhotAction::Noop;
            const HyperhotStep st = e.step(a);
            rewards += std::to_string(t) + "," + std::to_string(static_cast<int>(a)) + "," +
                       format_double(st.reward) + "," + (st.done ? "true" : "false") + "\n";
            obs = e.observe();
        }
    }
    dir.write_text("sound.csv", sound);
    dir.write_text("rewards.csv", rewards);
    if (waveforms) dir.write_text("waveforms.csv", waves);
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    return 0;
}

// ------------------------------------------------------- train / eval agent

ObservationAdapter make_adapter(const EnvSpec& env, AdapterKind kind, const std::string& checkpoint, double dropout,
                                const FeatureScaler& raw_scaler) {
    ObservationAdapter a;
    a.kind = kind;
    a.dropout = dropout;
    a.image_dim = env.image_dim();
    a.sound_dim = env.sound_dim();
    if (adapter_needs_model(kind)) {
        if (checkpoint.empty())
            throw ArtifactMismatch("adapter kind " + std::string(adapter_kind_name(kind)) +
                                   " needs adapter.checkpoint");
        const fs::path p = resolve(checkpoint, kCheckpoint);
        if (!fs::exists(p)) throw ArtifactMismatch("adapter.checkpoint: no such file: " + p.string());
        a.model = std::make_shared<const MuseModel>(load_model(p));
        a.sound_scaler = load_scaler(p);
    } else {
        a.sound_scaler = raw_scaler;
    }
    try {
        a.validate();
    } catch (const ContractError& e) {
        throw ArtifactMismatch(e.what());
    }
    return a;
}

int cmd_train_agent(Settings& s, const fs::path& out_path, bool force) {
    const EnvSpec env = read_env(s, std::nullopt);
    const AdapterKind kind =
        as_config_error("adapter.kind", [&] { return parse_adapter_kind(s.str("adapter.kind", "raw_fusion")); });
    const std::string checkpoint = adapter_needs_model(kind) ? s.str("adapter.checkpoint", "") : "";
    const double dropout = s.num("adapter.dropout", 0.2);

    AgentConfig defaults;
    defaults.algorithm = env.kind == EnvKind::Pendulum ? Algorithm::Ddpg : Algorithm::Dqn;
    defaults.seed = s.seed();
    Config ac_cfg = defaults.to_config();
    const Config user_agent = s.slice({"agent."});
    if (user_agent.has("agent.algorithm") &&
        user_agent.get_string("agent.algorithm") != algorithm_name(defaults.algorithm))
        throw ConfigError("agent.algorithm", "environment " + std::string(env_kind_name(env.kind)) + " requires " +
                                                 std::string(algorithm_name(defaults.algorithm)));
    ac_cfg.merge(user_agent);
    const AgentConfig ac = AgentConfig::from_config(ac_cfg);
    as_config_error("agent", [&] {
        ac.validate();
        return 0;
    });
    s.absorb({"agent."}, ac.to_config());
    s.finish();

    FeatureScaler raw_scaler;
    if (!adapter_needs_model(kind))
        raw_scaler = FeatureScaler::fit(env_dataset(env, 5000, 0).data[kSoundModality]);
    const ObservationAdapter adapter = make_adapter(env, kind, checkpoint, dropout, raw_scaler);

    OutputDir dir(out_path, force);
    Rng dropout_rng = Rng(ac.seed).split("adapter-dropout");
    std::vector<EpisodeRecord> curve;
    if (env.kind == EnvKind::Pendulum) {
        PendulumTask task(env.pendulum, adapter, {true, true}, &dropout_rng);
        auto r = train_ddpg(task, ac);
        save_agent(r.agent, dir / kAgent);
        curve = std::move(r.curve);
    } else {
        HyperhotTask task(env.hyperhot, adapter, {true, true}, &dropout_rng);
        auto r = train_dqn(task, ac);
        save_agent(r.agent, dir / kAgent);
        curve = std::move(r.curve);
    }
    std::string csv = "episode,reward,steps\n";
    for (const auto& e : curve)
        csv += std::to_string(e.episode) + "," + format_double(e.reward) + "," + std::to_string(e.steps) + "\n";
    dir.write_text("curve.csv", csv);

    Config ad = env.to_config();
    ad.set("adapter.kind", std::string(adapter_kind_name(kind)));
    ad.set("adapter.checkpoint", checkpoint);
    ad.set("adapter.dropout", dropout);
    ad.merge(adapter.sound_scaler.to_config("adapter.sound"));
    ad.save(dir / kAdapter);
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    return 0;
}

int cmd_eval_agent(Settings& s, const fs::path& out_path, bool force) {
    const fs::path agent_dir = existing_path(s, "eval.agent");
    const fs::path agent_path = resolve(agent_dir, kAgent);
    const fs::path adapter_path = agent_path.parent_path() / kAdapter;
    if (!fs::exists(agent_path) || !fs::exists(adapter_path))
        throw ArtifactMismatch("eval.agent: expected " + std::string(kAgent) + " and " + kAdapter + " in " +
                               agent_path.parent_path().string());
    const auto mask_names = s.list("eval.masks", {"joint", "image", "sound"});
    std::vector<std::array<bool, 2>> masks;
    for (const auto& m : mask_names) {
        const auto mask = as_config_error("eval.masks", [&] { return parse_modality_mask(m); });
        if (!mask[0] && !mask[1]) throw ConfigError("eval.masks", "mask 'none' leaves the agent blind");
        masks.push_back(mask);
    }
    const std::size_t episodes = s.size("eval.episodes", 100);
    if (episodes == 0) throw ConfigError("eval.episodes", "must be positive");
    const auto seeds = s.sizes("eval.seeds", {static_cast<std::size_t>(s.seed())});
    const bool random_baseline = s.flag("eval.random_baseline", false);
    s.finish();

    const Config ad = Config::load(adapter_path);
    const EnvSpec env = EnvSpec::from_config(ad);
    const AdapterKind kind = parse_adapter_kind(ad.get_string("adapter.kind"));
    const ObservationAdapter adapter =
        make_adapter(env, kind, ad.get_string("adapter.checkpoint", ""), ad.get_double("adapter.dropout", 0.2),
                     FeatureScaler::from_config(ad, "adapter.sound"));

    OutputDir dir(out_path, force);
    std::vector<RewardRow> rows;
    const std::string agent_kind(adapter_kind_name(kind));
    if (env.kind == EnvKind::Pendulum) {
        const DdpgAgent agent = load_ddpg_agent(agent_path);
        if (agent.actor_sizes.front() != adapter.output_dim())
            throw ArtifactMismatch("agent input width differs from the adapter output");
        for (std::size_t i = 0; i < masks.size(); ++i)
            for (auto seed : seeds)
                rows.push_back({agent_kind, mask_names[i], seed, "all",
                                zero_shot_eval(agent, adapter, env.pendulum, masks[i], episodes, seed).mean});
    } else {
        const DqnAgent agent = load_dqn_agent(agent_path);
        if (agent.sizes.front() != adapter.output_dim())
            throw ArtifactMismatch("agent input width differs from the adapter output");
        for (std::size_t i = 0; i < masks.size(); ++i)
            for (auto seed : seeds)
                rows.push_back({agent_kind, mask_names[i], seed, "all",
                                zero_shot_eval(agent, adapter, env.hyperhot, masks[i], episodes, seed).mean});
    }
    if (random_baseline)
        for (auto seed : seeds) rows.push_back({"random", "none", seed, "all", random_policy_eval(env, episodes, seed).mean});
    dir.write_text("zero_shot.csv", reward_csv(rows));
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    return 0;
}

// ------------------------------------------------------------------ gradcheck

OpKind parse_op(const std::string& name) {
    for (int k = static_cast<int>(OpKind::Input); k <= static_cast<int>(OpKind::Clamp); ++k)
        if (op_name(static_cast<OpKind>(k)) == name) return static_cast<OpKind>(k);
    throw ConfigError("gradcheck.fault", "unknown op '" + name + "'");
}

int cmd_gradcheck(Settings& s, const fs::path& out_path, bool force) {
    GradcheckSuiteOptions opt;
    opt.instances = s.size("gradcheck.instances", opt.instances);
    opt.tolerance = s.num("gradcheck.tolerance", opt.tolerance);
    opt.step = s.num("gradcheck.step", opt.step);
    opt.seed = s.u64("gradcheck.seed", s.seed());
    opt.only = s.list("gradcheck.cases", {});
    const auto known = gradcheck_case_names();
    for (const auto& c : opt.only)
        if (std::find(known.begin(), known.end(), c) == known.end())
            throw ConfigError("gradcheck.cases", "unknown case '" + c + "'");
    if (s.has("gradcheck.fault")) {
        opt.graph.faulty_backward = parse_op(s.str("gradcheck.fault", ""));
        opt.graph.fault_scale = s.num("gradcheck.fault_scale", opt.graph.fault_scale);
    }
    if (opt.instances == 0) throw ConfigError("gradcheck.instances", "must be positive");
    s.finish();

    OutputDir dir(out_path, force);
    const auto report = run_gradcheck_suite(opt);
    dir.write_text("gradcheck.csv", gradcheck_report_csv(report));
    s.manifest().save(dir / "manifest.cfg");
    dir.commit();
    for (const auto& c : report.cases)
        std::cout << c.name << " worst_rel_error=" << format_double(c.worst_rel_error)
                  << (c.passed ? " ok" : " FAILED") << "\n";
    if (!report.passed) throw CheckFailure("gradient check failed");
    return 0;
}

using Command = int (*)(Settings&, const fs::path&, bool);

Config read_user_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config c;
    if (!path.empty()) {
        if (!fs::exists(path)) throw ConfigError("--config", "no such file: " + path);
        try {
            c = Config::load(path);
        } catch (const ParseError& e) {
            throw ConfigError("--config", e.what());
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(o, "--set expects key=value");
        c.set(o.substr(0, eq), o.substr(eq + 1));
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal hierarchical VAE pipeline: train, evaluate, generate, simulate, act."};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    bool force = false;
    app.add_option("--config", config_path, "key = value config file (a manifest reruns a command)");
    app.add_option("--seed", seed, "global seed (default: run.seed from the config, else 0)");
    app.add_option("--out", out_path, "output directory, created atomically");
    app.add_option("--set", overrides, "override a config key, key=value (repeatable)");
    app.add_flag("--force", force, "replace an existing output directory");

    const std::vector<std::pair<std::string, Command>> commands{
        {"train-model", cmd_train_model},  {"eval-likelihood", cmd_eval_likelihood},
        {"generate", cmd_generate},        {"env", cmd_env},
        {"train-agent", cmd_train_agent},  {"eval-agent", cmd_eval_agent},
        {"gradcheck", cmd_gradcheck},
    };
    const std::map<std::string, std::string> help{
        {"train-model", "train a model variant; writes model.pst, losses.csv"},
        {"eval-likelihood", "importance-weighted log-likelihoods; writes likelihood.csv"},
        {"generate", "cross-modal generation; writes sample_<i>_<target> files"},
        {"env", "scripted or random rollout; writes frames, sound.csv, rewards.csv"},
        {"train-agent", "train a DQN/DDPG agent on an adapter; writes agent.pst, curve.csv"},
        {"eval-agent", "zero-shot evaluation under modality masks; writes zero_shot.csv"},
        {"gradcheck", "finite-difference check of every op and loss; writes gradcheck.csv"},
    };
    for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const Config user = read_user_config(config_path, overrides);
        std::uint64_t run_seed = 0;
        if (seed)
            run_seed = *seed;
        else if (user.has("run.seed"))
            run_seed = user.get_u64("run.seed", 0);
        for (const auto& [name, fn] : commands) {
            if (!app.got_subcommand(name)) continue;
            Settings settings(user, name, run_seed);
            return fn(settings, out_path, force);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ArtifactMismatch& e) {
        std::cerr << "artifact mismatch: " << e.what() << "\n";
        return 3;
    } catch (const CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
