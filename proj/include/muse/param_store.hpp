#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

class Graph;
struct Var;

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named trainable tensors together with their Adam moments.
///
/// Entries are kept in name order so iteration, serialization and
/// checksums are deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor first_moment;
        Tensor second_moment;
        std::uint64_t step = 0;
    };

    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return entries_.contains(name); }
    const Tensor& value(const std::string& name) const;
    Tensor& mutable_value(const std::string& name);
    const Entry& entry(const std::string& name) const;
    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t parameter_count() const noexcept;

    /// Bias-corrected Adam update of every entry named in `grads`.
    void adam_step(const std::map<std::string, Tensor>& grads, const AdamConfig& config);
    /// Reset moments and step counters; values untouched.
    void reset_optimizer();

    /// Polyak averaging: this = (1 - tau) * this + tau * source, for shared names.
    void soft_update_from(const ParamStore& source, double tau);
    void copy_values_from(const ParamStore& source);

    /// Binary container: "MUSEPST1", then per entry the name length (u32 LE),
    /// UTF-8 name, rank (u32 LE), dims (u32 LE each), values (f64 LE).
    std::vector<std::uint8_t> serialize() const;
    static ParamStore deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

    /// 64-bit digest of the serialized values.
    std::uint64_t checksum() const;

    bool operator==(const ParamStore& other) const;

private:
    std::map<std::string, Entry> entries_;
};

/// Creates graph leaves for store entries on first use, so a parameter
/// used in several places maps to a single leaf.
class ParamBinder {
public:
    ParamBinder(Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}
    Var operator()(const std::string& name);
    Graph& graph() noexcept { return graph_; }
    const ParamStore& store() const noexcept { return store_; }

private:
    Graph& graph_;
    const ParamStore& store_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace muse
