#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kCli = MUSE_CLI_PATH;
const fs::path kMnist = MUSE_MNIST_DIR;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "muse_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

/// Runs the CLI with output captured in `log`; returns its exit code.
int run(const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" + kCli.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_in(const fs::path& dir, const std::string& args) { return run(args, dir / "log.txt"); }

std::string arg(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Regular files of a directory, name to bytes.
std::vector<std::pair<std::string, std::string>> contents(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out.emplace_back(e.path().filename().string(), read_file(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

const char* kSyntheticCfg = R"(# small synthetic run
data.source = synthetic
data.count = 300
train.epochs = 3
)";

/// Trains a small synthetic model once per test binary.
const fs::path& synthetic_model() {
    static const fs::path out = [] {
        const fs::path dir = scratch("synthetic_model");
        write_file(dir / "synthetic.cfg", kSyntheticCfg);
        const int code = run_in(dir, "train-model --config " + arg(dir / "synthetic.cfg") + " --seed 0 --out " +
                                         arg(dir / "run"));
        REQUIRE(code == 0);
        return dir / "run";
    }();
    return out;
}

double column(const std::string& row, std::size_t col) {
    std::istringstream in(row);
    std::string cell;
    for (std::size_t i = 0; i <= col; ++i) std::getline(in, cell, ',');
    return std::stod(cell);
}

}  // namespace

TEST_CASE("train-model writes a checkpoint and a falling loss curve") {
    const auto& run_dir = synthetic_model();
    CHECK(fs::exists(run_dir / "model.pst"));
    CHECK(fs::exists(run_dir / "manifest.cfg"));
    const auto rows = lines(read_file(run_dir / "losses.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "epoch,bottom,top,alma,total");
    CHECK(column(rows.back(), 4) < column(rows[1], 4));
    CHECK_FALSE(fs::exists(run_dir.string() + ".partial"));

    const fs::path dir = scratch("train_rerun");
    write_file(dir / "synthetic.cfg", kSyntheticCfg);
    REQUIRE(run_in(dir, "train-model --config " + arg(dir / "synthetic.cfg") + " --seed 0 --out " + arg(dir / "a")) ==
            0);
    CHECK(read_file(dir / "a" / "losses.csv") == read_file(run_dir / "losses.csv"));
    CHECK(read_file(dir / "a" / "model.pst") == read_file(run_dir / "model.pst"));
}

TEST_CASE("manifest rerun is byte identical") {
    const auto& run_dir = synthetic_model();
    const fs::path dir = scratch("manifest_rerun");
    REQUIRE(run_in(dir, "train-model --config " + arg(run_dir / "manifest.cfg") + " --out " + arg(dir / "b")) == 0);
    CHECK(contents(dir / "b") == contents(run_dir));
    // A manifest belongs to its command.
    CHECK(run_in(dir, "env --config " + arg(run_dir / "manifest.cfg") + " --out " + arg(dir / "c")) == 2);
}

TEST_CASE("config errors exit 2") {
    const fs::path dir = scratch("config_errors");
    write_file(dir / "bad.cfg", "data.source = synthetic\ntrain.epochz = 3\n");
    CHECK(run_in(dir, "train-model --config " + arg(dir / "bad.cfg") + " --out " + arg(dir / "o")) == 2);
    CHECK(read_file(dir / "log.txt").find("train.epochz") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "o"));

    write_file(dir / "mnist.cfg", "data.source = mnist\ndata.images = /nonexistent/images\n");
    CHECK(run_in(dir, "train-model --config " + arg(dir / "mnist.cfg") + " --out " + arg(dir / "o")) == 2);
    CHECK(run_in(dir, "train-model --set data.source=synthetic") == 2);
    CHECK(run_in(dir, "no-such-command --out " + arg(dir / "o")) == 2);
    CHECK(run_in(dir, "env --out " + arg(dir / "o") + " --set env.name=tetris") == 2);

    fs::create_directories(dir / "exists");
    CHECK(run_in(dir, "env --out " + arg(dir / "exists") + " --set env.name=pendulum") == 2);
    CHECK(run_in(dir, "env --force --out " + arg(dir / "exists") + " --set env.name=pendulum") == 0);
}

TEST_CASE("eval-likelihood rows and errors") {
    const auto& model = synthetic_model();
    const fs::path dir = scratch("eval_likelihood");
    const std::string base = "eval-likelihood --set data.source=synthetic --set data.count=20 --set eval.checkpoint=" +
                             arg(model) + " --set eval.num_samples=10";
    REQUIRE(run_in(dir, base + " --out " + arg(dir / "a")) == 0);
    const auto rows = lines(read_file(dir / "a" / "likelihood.csv"));
    REQUIRE(!rows.empty());
    CHECK(rows[0] == "metric,modality,N,value,stderr,seed");
    // Two marginals, one joint, two conditionals.
    CHECK(rows.size() == 6);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::isfinite(column(rows[i], 3)));
    REQUIRE(run_in(dir, base + " --out " + arg(dir / "b")) == 0);
    CHECK(read_file(dir / "a" / "likelihood.csv") == read_file(dir / "b" / "likelihood.csv"));

    REQUIRE(run_in(dir, base + " --set eval.metrics=marginal --set eval.modalities=angle --out " + arg(dir / "c")) == 0);
    const auto only = lines(read_file(dir / "c" / "likelihood.csv"));
    REQUIRE(only.size() == 2);
    CHECK(only[1].starts_with("marginal,angle,10,"));

    CHECK(run_in(dir, base + " --set eval.num_samples=0 --out " + arg(dir / "d")) == 2);
    CHECK(run_in(dir, base + " --set data.image_size=8 --out " + arg(dir / "e")) == 3);
    write_file(dir / "junk.pst", "not a checkpoint");
    CHECK(run_in(dir, "eval-likelihood --set data.source=synthetic --set eval.checkpoint=" + arg(dir / "junk.pst") +
                          " --out " + arg(dir / "f")) == 3);
}

TEST_CASE("generate") {
    const auto& model = synthetic_model();
    const fs::path dir = scratch("generate");
    const std::string base = "generate --set generate.checkpoint=" + arg(model);
    REQUIRE(run_in(dir, base + " --set generate.sources=angle --set generate.target=image --set generate.input.angle=1,0"
                               " --set generate.count=3 --out " +
                            arg(dir / "a")) == 0);
    for (int i = 0; i < 3; ++i) {
        const auto pgm = read_file(dir / "a" / ("sample_" + std::to_string(i) + "_image.pgm"));
        CHECK(pgm.starts_with("P5\n16 16\n255\n"));
        CHECK(pgm.size() == std::string("P5\n16 16\n255\n").size() + 256);
    }
    CHECK_FALSE(fs::exists(dir / "a" / "sample_3_image.pgm"));
    CHECK(run_in(dir, base + " --set generate.sources= --set generate.target=image --out " + arg(dir / "b")) == 2);
    CHECK(run_in(dir, base + " --set generate.sources=smell --set generate.target=image --out " + arg(dir / "c")) == 2);
    CHECK(run_in(dir, base + " --set generate.sources=angle --set generate.target=image --set generate.input.angle=1"
                             " --out " +
                          arg(dir / "d")) == 2);
}

TEST_CASE("generate from an MNIST label") {
    if (!fs::exists(kMnist / "train-images-idx3-ubyte")) {
        MESSAGE("MNIST not found; skipped");
        return;
    }
    const fs::path dir = scratch("generate_mnist");
    REQUIRE(run_in(dir, "train-model --set data.source=mnist --set data.images=" +
                            arg(kMnist / "train-images-idx3-ubyte") + " --set data.labels=" +
                            arg(kMnist / "train-labels-idx1-ubyte") +
                            " --set data.limit=256 --set train.epochs=1 --out " + arg(dir / "m")) == 0);
    REQUIRE(run_in(dir, "generate --set generate.checkpoint=" + arg(dir / "m") +
                            " --set generate.sources=label --set generate.target=image --set generate.input.label=7"
                            " --out " +
                            arg(dir / "g")) == 0);
    std::size_t images = 0;
    for (const auto& [name, bytes] : contents(dir / "g")) {
        if (!name.ends_with(".pgm")) continue;
        ++images;
        CHECK(bytes.starts_with("P5\n28 28\n255\n"));
        CHECK(bytes.size() == std::string("P5\n28 28\n255\n").size() + 784);
    }
    CHECK(images == 8);
}

TEST_CASE("env rollouts") {
    const fs::path dir = scratch("env");
    REQUIRE(run_in(dir, "env --set env.name=pendulum --set rollout.steps=10 --out " + arg(dir / "p")) == 0);
    std::size_t frames = 0;
    for (const auto& [name, bytes] : contents(dir / "p")) frames += name.starts_with("frame_") && name.ends_with(".pgm");
    CHECK(frames == 10);
    const auto sound = lines(read_file(dir / "p" / "sound.csv"));
    CHECK(sound.size() == 11);
    CHECK(sound[0] == "step,s0,s1,s2,s3");
    REQUIRE(run_in(dir, "env --set env.name=pendulum --set rollout.steps=10 --out " + arg(dir / "p2")) == 0);
    CHECK(contents(dir / "p") == contents(dir / "p2"));

    REQUIRE(run_in(dir, "env --set env.name=hyperhot --set rollout.steps=500 --set rollout.policy=scripted --seed 0"
                        " --out " +
                        arg(dir / "h")) == 0);
    const auto rewards = lines(read_file(dir / "h" / "rewards.csv"));
    REQUIRE(rewards.size() > 1);
    CHECK(rewards[0] == "step,action,reward,done");
    CHECK(column(rewards.back(), 2) == 10.0);
    CHECK(rewards.back().ends_with(",true"));

    REQUIRE(run_in(dir, "env --set env.name=hyperhot --set rollout.steps=3 --set rollout.waveforms=true --out " +
                            arg(dir / "w")) == 0);
    const auto waves = lines(read_file(dir / "w" / "waveforms.csv"));
    CHECK(waves.size() > 1);
}

TEST_CASE("train-agent and eval-agent") {
    const fs::path dir = scratch("agent");
    const std::string env = " --set env.name=pendulum --set pendulum.max_steps=20";
    REQUIRE(run_in(dir, "train-agent" + env +
                            " --set agent.total_steps=200 --set agent.warmup_steps=50 --set agent.batch_size=16"
                            " --set agent.hidden=8 --out " +
                            arg(dir / "a")) == 0);
    CHECK(fs::exists(dir / "a" / "agent.pst"));
    CHECK(lines(read_file(dir / "a" / "curve.csv")).size() == 11);

    const std::string eval = "eval-agent --set eval.agent=" + arg(dir / "a") + " --set eval.episodes=2";
    REQUIRE(run_in(dir, eval + " --set eval.seeds=1,2 --out " + arg(dir / "e")) == 0);
    const auto rows = lines(read_file(dir / "e" / "zero_shot.csv"));
    CHECK(rows[0] == "agent_kind,modality_mask,seed,episode,reward");
    CHECK(rows.size() == 1 + 3 * 2);
    REQUIRE(run_in(dir, eval + " --set eval.seeds=1,2 --out " + arg(dir / "e2")) == 0);
    CHECK(contents(dir / "e") == contents(dir / "e2"));

    CHECK(run_in(dir, eval + " --set eval.masks=joint,smell --out " + arg(dir / "f")) == 2);
    CHECK(run_in(dir, eval + " --set eval.masks=none --out " + arg(dir / "g")) == 2);
    CHECK(run_in(dir, "train-agent" + env + " --set adapter.kind=muse_latent --out " + arg(dir / "h")) == 3);
    CHECK(run_in(dir, "train-agent" + env + " --set agent.algorithm=dqn --out " + arg(dir / "i")) == 2);
}

TEST_CASE("gradcheck command") {
    const fs::path dir = scratch("gradcheck");
    const std::string base = "gradcheck --set gradcheck.cases=op.add,op.tanh,loss.top --set gradcheck.instances=5";
    REQUIRE(run_in(dir, base + " --out " + arg(dir / "a")) == 0);
    const auto rows = lines(read_file(dir / "a" / "gradcheck.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "case,instances,coords,worst_rel_error,worst_param,passed");
    CHECK(rows[1].starts_with("op.add,5,"));
    CHECK(read_file(dir / "log.txt").find("op.tanh") != std::string::npos);

    CHECK(run_in(dir, base + " --set gradcheck.fault=tanh --out " + arg(dir / "b")) == 1);
    CHECK(run_in(dir, base + " --set gradcheck.cases=op.nope --out " + arg(dir / "c")) == 2);
}

TEST_CASE("hyperhot agent pipeline") {
    const fs::path dir = scratch("hyperhot_agent");
    const std::string env = " --set env.name=hyperhot --set hyperhot.episode_limit=60";
    REQUIRE(run_in(dir, "train-agent" + env +
                            " --set agent.total_steps=300 --set agent.warmup_steps=50 --set agent.batch_size=16"
                            " --set agent.hidden=8 --out " +
                            arg(dir / "a")) == 0);
    REQUIRE(fs::exists(dir / "a" / "agent.pst"));
    CHECK(read_file(dir / "a" / "agent.pst.cfg").find("dqn") != std::string::npos);
    REQUIRE(run_in(dir, "eval-agent --set eval.agent=" + arg(dir / "a") +
                            " --set eval.episodes=2 --set eval.random_baseline=true --out " + arg(dir / "e")) == 0);
    const auto rows = lines(read_file(dir / "e" / "zero_shot.csv"));
    CHECK(rows.size() == 1 + 3 + 1);
    CHECK(rows.back().starts_with("random,none,"));
    CHECK(run_in(dir, "train-agent" + env + " --set agent.algorithm=ddpg --out " + arg(dir / "b")) == 2);
}
