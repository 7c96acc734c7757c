#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "muse/config.hpp"

namespace muse::cli {

/// Thrown for a failed check (gradient check, divergence); exit code 1.
class CheckFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// User configuration plus bookkeeping of which keys a command consumed.
///
/// Every value a command reads, with its fallback filled in, lands in the
/// effective config; the manifest is that config plus run.command and
/// run.seed. A user key no command reads is a config error.
class Settings {
public:
    Settings(Config user, std::string command, std::uint64_t seed);

    const std::string& command() const noexcept { return command_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const Config& user() const noexcept { return user_; }

    bool has(const std::string& key) const { return user_.has(key); }
    std::string str(const std::string& key, const std::string& fallback);
    std::string required(const std::string& key);
    double num(const std::string& key, double fallback);
    std::size_t size(const std::string& key, std::size_t fallback);
    std::uint64_t u64(const std::string& key, std::uint64_t fallback);
    bool flag(const std::string& key, bool fallback);
    std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback);
    std::vector<std::size_t> sizes(const std::string& key, const std::vector<std::size_t>& fallback);

    /// User keys under `prefixes`, for building an object config.
    Config slice(const std::vector<std::string>& prefixes) const;
    /// Records an object's effective config. User keys under `prefixes`
    /// count as consumed only if the object wrote them back.
    void absorb(const std::vector<std::string>& prefixes, const Config& effective);

    /// Throws ConfigError for the first user key nothing consumed.
    void finish() const;
    Config manifest() const;

private:
    void use(const std::string& key) { used_.insert(key); }

    Config user_;
    Config effective_;
    std::set<std::string> used_;
    std::string command_;
    std::uint64_t seed_;
};

/// Output directory staged as <out>.partial and renamed on commit.
class OutputDir {
public:
    OutputDir(std::filesystem::path out, bool force);
    const std::filesystem::path& staging() const noexcept { return staging_; }
    std::filesystem::path operator/(const std::string& name) const { return staging_ / name; }
    void write_text(const std::string& name, const std::string& text) const;
    void commit();
    ~OutputDir();

private:
    std::filesystem::path out_;
    std::filesystem::path staging_;
    bool force_;
    bool committed_ = false;
};

}  // namespace muse::cli
