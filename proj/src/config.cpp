#include "muse/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "muse/errors.hpp"

namespace muse {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
    return true;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    // 17 significant digits round-trip every double.
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(std::string_view text, char sep) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        out.emplace_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

Config Config::parse(std::string_view text) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", line_no);
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!section.empty() && !valid_key(section)) throw ParseError("bad section name '" + section + "'", line_no);
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
            const auto key = trim(line.substr(0, eq));
            if (!valid_key(key)) throw ParseError("bad key '" + std::string(key) + "'", line_no);
            const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
            if (cfg.values_.contains(full)) throw ParseError("duplicate key '" + full + "'", line_no);
            cfg.values_[full] = std::string(trim(line.substr(eq + 1)));
        }
        if (end == text.size()) break;
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Config::serialize() const {
    // Group by the part before the first dot; keys without a dot go first.
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> groups;
    for (const auto& [k, v] : values_) {
        const auto dot = k.find('.');
        if (dot == std::string::npos)
            groups[""].emplace_back(k, v);
        else
            groups[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
    }
    std::string out;
    for (const auto& [section, entries] : groups) {
        if (!section.empty()) {
            if (!out.empty()) out += '\n';
            out += "[" + section + "]\n";
        }
        for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    }
    return out;
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path.string(), "cannot write config file");
    out << serialize();
}

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError(key, "invalid key");
    if (value.find('\n') != std::string::npos || value.find('#') != std::string::npos)
        throw ConfigError(key, "value may not contain newlines or '#'");
    values_[key] = value;
}

void Config::set(const std::string& key, double value) { set(key, format_double(value)); }
void Config::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

void Config::set(const std::string& key, const std::vector<std::size_t>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
    set(key, s);
}

void Config::set_default(const std::string& key, const std::string& value) {
    if (!has(key)) set(key, value);
}

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "missing");
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "not a number: '" + s + "'");
    return v;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "not an integer: '" + s + "'");
    return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = get_int(key);
    if (v < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string s = get_string(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "not an unsigned integer: '" + s + "'");
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = get_string(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key, "not a boolean: '" + s + "'");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : split_list(get_string(key))) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError(key, "not a list of sizes: '" + get_string(key) + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    return has(key) ? split_list(get_string(key)) : fallback;
}

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

Config Config::section(const std::string& prefix) const {
    Config out;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : values_)
        if (k.starts_with(p)) out.values_[k.substr(p.size())] = v;
    return out;
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

void Config::require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
        bool ok = allowed.contains(k);
        for (const auto& a : allowed)
            if (!ok && a.ends_with('*') && k.starts_with(a.substr(0, a.size() - 1))) ok = true;
        if (!ok) throw ConfigError(k, "unknown key");
    }
}

}  // namespace muse
