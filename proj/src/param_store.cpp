#include "muse/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "muse/autodiff.hpp"
#include "muse/errors.hpp"
#include "muse/rng.hpp"

namespace muse {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'S', 'E', 'P', 'S', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw ParseError(std::string("truncated parameter container: ") + what, pos_);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8, "value");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n) {
        need(n, "name");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void ParamStore::add(const std::string& name, Tensor value) {
    if (entries_.contains(name)) throw ContractError("parameter '" + name + "' already exists");
    Entry e;
    e.first_moment = Tensor(value.shape(), 0.0);
    e.second_moment = Tensor(value.shape(), 0.0);
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

Tensor& ParamStore::mutable_value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::size_t ParamStore::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
}

void ParamStore::adam_step(const std::map<std::string, Tensor>& grads, const AdamConfig& config) {
    for (const auto& [name, g] : grads) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("adam_step: gradient for unknown parameter '" + name + "'");
        Entry& e = it->second;
        if (g.shape() != e.value.shape())
            throw ShapeError("adam_step: gradient shape " + shape_to_string(g.shape()) + " does not match '" + name +
                             "' " + shape_to_string(e.value.shape()));
        e.step += 1;
        const double t = static_cast<double>(e.step);
        const double c1 = 1.0 - std::pow(config.beta1, t);
        const double c2 = 1.0 - std::pow(config.beta2, t);
        auto& p = e.value.storage();
        auto& m = e.first_moment.storage();
        auto& v = e.second_moment.storage();
        const auto& gs = g.storage();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gs[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gs[i] * gs[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

void ParamStore::reset_optimizer() {
    for (auto& [_, e] : entries_) {
        e.first_moment = Tensor(e.value.shape(), 0.0);
        e.second_moment = Tensor(e.value.shape(), 0.0);
        e.step = 0;
    }
}

void ParamStore::soft_update_from(const ParamStore& source, double tau) {
    for (auto& [name, e] : entries_) {
        const Tensor& s = source.value(name);
        auto& d = e.value.storage();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (1.0 - tau) * d[i] + tau * s[i];
    }
}

void ParamStore::copy_values_from(const ParamStore& source) {
    for (auto& [name, e] : entries_) e.value = source.value(name);
}

std::vector<std::uint8_t> ParamStore::serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    for (const auto& [name, e] : entries_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : e.value.storage()) put_f64(out, v);
    }
    return out;
}

ParamStore ParamStore::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ParseError("missing MUSEPST1 header", 0);
    Reader r(bytes.subspan(8));
    ParamStore store;
    while (!r.done()) {
        const std::size_t start = r.pos() + 8;
        const auto name_len = r.u32("name length");
        std::string name = r.str(name_len);
        const auto rank = r.u32("rank");
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = r.u32("dimension");
            if (d == 0) throw ParseError("zero dimension in '" + name + "'", start);
            shape.push_back(d);
        }
        std::vector<double> values(shape_size(shape));
        r.need(values.size() * 8, "values");
        for (auto& v : values) v = r.f64();
        if (store.contains(name)) throw ParseError("duplicate entry '" + name + "'", start);
        store.add(name, Tensor(std::move(shape), std::move(values)));
    }
    return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void ParamStore::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

ParamStore ParamStore::load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (auto b : serialize()) h = mix64(h ^ b);
    return h;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [name, e] : entries_) {
        auto it = other.entries_.find(name);
        if (it == other.entries_.end() || !(it->second.value == e.value)) return false;
    }
    return true;
}

Var ParamBinder::operator()(const std::string& name) {
    if (graph_.has_leaf(name)) return graph_.leaf(name);
    return graph_.param(name, store_.value(name));
}

}  // namespace muse
