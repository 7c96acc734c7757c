#include "cli_settings.hpp"

#include <fstream>

#include "muse/errors.hpp"

namespace muse::cli {

Settings::Settings(Config user, std::string command, std::uint64_t seed)
    : user_(std::move(user)), command_(std::move(command)), seed_(seed) {
    if (user_.has("run.command") && user_.get_string("run.command") != command_)
        throw ConfigError("run.command", "manifest was written by '" + user_.get_string("run.command") + "'");
    use("run.command");
    use("run.seed");
}

std::string Settings::str(const std::string& key, const std::string& fallback) {
    use(key);
    const std::string v = user_.get_string(key, fallback);
    effective_.set(key, v);
    return v;
}

std::string Settings::required(const std::string& key) {
    if (!user_.has(key)) throw ConfigError(key, "required");
    return str(key, "");
}

double Settings::num(const std::string& key, double fallback) {
    use(key);
    const double v = user_.get_double(key, fallback);
    effective_.set(key, v);
    return v;
}

std::size_t Settings::size(const std::string& key, std::size_t fallback) {
    use(key);
    const std::size_t v = user_.get_size(key, fallback);
    effective_.set(key, v);
    return v;
}

std::uint64_t Settings::u64(const std::string& key, std::uint64_t fallback) {
    use(key);
    const std::uint64_t v = user_.get_u64(key, fallback);
    effective_.set(key, std::to_string(v));
    return v;
}

bool Settings::flag(const std::string& key, bool fallback) {
    use(key);
    const bool v = user_.get_bool(key, fallback);
    effective_.set(key, v);
    return v;
}

std::vector<std::string> Settings::list(const std::string& key, const std::vector<std::string>& fallback) {
    use(key);
    const auto v = user_.get_list(key, fallback);
    std::string joined;
    for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
    effective_.set(key, joined);
    return v;
}

std::vector<std::size_t> Settings::sizes(const std::string& key, const std::vector<std::size_t>& fallback) {
    use(key);
    const auto v = user_.get_sizes(key, fallback);
    effective_.set(key, v);
    return v;
}

Config Settings::slice(const std::vector<std::string>& prefixes) const {
    Config out;
    for (const auto& k : user_.keys())
        for (const auto& p : prefixes)
            if (k.starts_with(p)) out.set(k, user_.get_string(k));
    return out;
}

void Settings::absorb(const std::vector<std::string>& prefixes, const Config& effective) {
    for (const auto& k : effective.keys()) {
        for (const auto& p : prefixes) {
            if (k.starts_with(p)) {
                use(k);
                effective_.set(k, effective.get_string(k));
                break;
            }
        }
    }
}

void Settings::finish() const {
    for (const auto& k : user_.keys())
        if (!used_.contains(k)) throw ConfigError(k, "unknown key for command '" + command_ + "'");
}

Config Settings::manifest() const {
    Config m = effective_;
    m.set("run.command", command_);
    m.set("run.seed", std::to_string(seed_));
    return m;
}

OutputDir::OutputDir(std::filesystem::path out, bool force) : out_(std::move(out)), force_(force) {
    if (out_.empty()) throw ConfigError("--out", "required");
    if (std::filesystem::exists(out_) && !force_) throw ConfigError("--out", out_.string() + " exists; pass --force");
    staging_ = out_;
    staging_ += ".partial";
    std::filesystem::remove_all(staging_);
    std::filesystem::create_directories(staging_);
}

void OutputDir::write_text(const std::string& name, const std::string& text) const {
    std::ofstream f(staging_ / name, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + (staging_ / name).string());
}

void OutputDir::commit() {
    if (force_) std::filesystem::remove_all(out_);
    std::filesystem::rename(staging_, out_);
    committed_ = true;
}

OutputDir::~OutputDir() {
    if (!committed_) {
        std::error_code ec;
        std::filesystem::remove_all(staging_, ec);
    }
}

}  // namespace muse::cli
