#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace muse {

/// Flat key = value text with optional [section] headers and # comments.
///
/// Keys are stored fully qualified ("section.key"); keys that appear before
/// any header have no prefix. Serialization groups keys by section in
/// lexical order, so parse(serialize()) reproduces the same map and a
/// serialized config is stable across runs.
class Config {
public:
    static Config parse(std::string_view text);
    static Config load(const std::filesystem::path& path);
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, std::size_t value) { set(key, static_cast<std::int64_t>(value)); }
    void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    void set(const std::string& key, const std::vector<std::size_t>& values);
    /// Set only when absent; used to fill defaults into a manifest.
    void set_default(const std::string& key, const std::string& value);
    void erase(const std::string& key) { values_.erase(key); }

    /// Typed getters throw ConfigError naming the key on a missing key (no
    /// default) or an unparsable value.
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    std::vector<std::string> keys() const;
    /// Keys under "prefix." with the prefix removed.
    Config section(const std::string& prefix) const;
    /// Insert every key of `other`, overwriting.
    void merge(const Config& other);
    /// Throws ConfigError for the first key not in `allowed`. Entries of
    /// `allowed` ending in '*' match any key with that prefix.
    void require_known(const std::set<std::string>& allowed) const;

    bool operator==(const Config& other) const = default;

private:
    std::map<std::string, std::string> values_;
};

std::string format_double(double v);
std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace muse
