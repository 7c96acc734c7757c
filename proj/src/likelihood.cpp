#include "muse/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "muse/errors.hpp"

namespace muse {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct Proposal {
    Tensor z;                       // [N, D]
    std::vector<double> log_ratio;  // log p(z) - log q(z), per row
};

Proposal draw(std::span<const double> mean, std::span<const double> logvar, std::size_t n, Rng& rng) {
    const std::size_t d = mean.size();
    Proposal p{Tensor({n, d}), std::vector<double>(n, 0.0)};
    for (std::size_t r = 0; r < n; ++r) {
        double lp = 0.0, lq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double eps = rng.normal();
            const double z = mean[i] + std::exp(0.5 * logvar[i]) * eps;
            p.z.at(r, i) = z;
            lp -= kHalfLog2Pi + 0.5 * z * z;
            lq -= kHalfLog2Pi + 0.5 * logvar[i] + 0.5 * eps * eps;
        }
        p.log_ratio[r] = lp - lq;
    }
    return p;
}

IwEstimate summarize(const std::vector<double>& per_datum, std::size_t n_samples) {
    IwEstimate e;
    e.num_samples = n_samples;
    e.count = per_datum.size();
    if (per_datum.empty()) return e;
    double s = 0.0;
    for (double v : per_datum) s += v;
    e.value = s / static_cast<double>(per_datum.size());
    if (per_datum.size() > 1) {
        double ss = 0.0;
        for (double v : per_datum) ss += (v - e.value) * (v - e.value);
        e.std_error = std::sqrt(ss / static_cast<double>(per_datum.size() - 1) / static_cast<double>(per_datum.size()));
    }
    if (!std::isfinite(e.value)) throw NumericError("importance-weighted estimate is not finite");
    return e;
}

void check_options(const IwOptions& o) {
    if (o.num_samples < 1) throw ContractError("importance sample count N must be at least 1");
}

// Data-space log-likelihood of row `row` of x under each row of decoder output.
void add_data_loglik(std::vector<double>& w, LikelihoodKind kind, const Tensor& output, std::span<const double> x) {
    for (std::size_t r = 0; r < w.size(); ++r) w[r] -= negative_log_likelihood_value(kind, output.row_span(r), x);
}

void add_code_loglik(std::vector<double>& w, const Tensor& code_mean, std::span<const double> c) {
    for (std::size_t r = 0; r < w.size(); ++r) {
        const auto row = code_mean.row_span(r);
        double ll = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) ll -= kHalfLog2Pi + 0.5 * (row[i] - c[i]) * (row[i] - c[i]);
        w[r] += ll;
    }
}

Rng datum_rng(const IwOptions& o, std::string_view metric, std::size_t index) {
    return Rng(o.seed).split(metric).split(index);
}

}  // namespace

double log_mean_exp(std::span<const double> log_weights) {
    if (log_weights.empty()) throw ContractError("log_mean_exp: no weights");
    const double mx = *std::max_element(log_weights.begin(), log_weights.end());
    if (!std::isfinite(mx)) throw NumericError("log_mean_exp: non-finite maximum log-weight");
    double s = 0.0;
    for (double w : log_weights) s += std::exp(w - mx);
    return mx + std::log(s) - std::log(static_cast<double>(log_weights.size()));
}

IwEstimate iw_marginal(const MuseModel& model, std::size_t m, const Tensor& data, const IwOptions& options) {
    check_options(options);
    if (m >= model.modality_count()) throw ContractError("iw_marginal: modality index out of range");
    const LikelihoodKind kind = model.spec(m).likelihood;
    const GaussianBatch q = model.hierarchical() ? encode_modality(model, m, data)
                                                 : encode_multimodal(model, {{m, data}}, data.rows());
    std::vector<double> per_datum;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        Rng rng = datum_rng(options, "marginal", i);
        Proposal p = draw(q.mean.row_span(i), q.logvar.row_span(i), options.num_samples, rng);
        ModelGraph mg(model);
        Var z = mg.input(p.z);
        Var out = model.hierarchical() ? mg.bottom_decode(m, z) : mg.decode_to_data(m, z);
        std::vector<double> w = p.log_ratio;
        add_data_loglik(w, kind, out.value(), data.row_span(i));
        for (auto& v : w) v += options.log_weight_offset;
        per_datum.push_back(log_mean_exp(w));
    }
    return summarize(per_datum, options.num_samples);
}

IwEstimate iw_joint(const MuseModel& model, const MultimodalDataset& dataset, const IwOptions& options) {
    check_options(options);
    if (dataset.modality_count() != model.modality_count()) throw ContractError("iw_joint: modality count mismatch");
    const MultimodalSample full = full_sample(dataset);
    std::vector<Tensor> codes;
    for (std::size_t m = 0; m < model.modality_count(); ++m)
        codes.push_back(code_of(model, m, dataset.data[m], CodeMode::Deterministic));
    const GaussianBatch q = encode_sample(model, full);
    std::vector<double> per_datum;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Rng rng = datum_rng(options, "joint", i);
        Proposal p = draw(q.mean.row_span(i), q.logvar.row_span(i), options.num_samples, rng);
        ModelGraph mg(model);
        Var z = mg.input(p.z);
        std::vector<double> w = p.log_ratio;
        for (std::size_t m = 0; m < model.modality_count(); ++m) {
            if (model.hierarchical())
                add_code_loglik(w, mg.top_decode(m, z).value(), codes[m].row_span(i));
            else
                add_data_loglik(w, model.spec(m).likelihood, mg.decode_to_data(m, z).value(),
                                dataset.data[m].row_span(i));
        }
        for (auto& v : w) v += options.log_weight_offset;
        per_datum.push_back(log_mean_exp(w));
    }
    return summarize(per_datum, options.num_samples);
}

IwEstimate iw_conditional(const MuseModel& model, std::size_t target, const std::vector<std::size_t>& sources,
                          const MultimodalDataset& dataset, const IwOptions& options) {
    check_options(options);
    if (sources.empty()) throw ContractError("iw_conditional: sources must not be empty");
    if (target >= model.modality_count()) throw ContractError("iw_conditional: target index out of range");
    if (dataset.modality_count() != model.modality_count())
        throw ContractError("iw_conditional: modality count mismatch");
    MultimodalSample src = full_sample(dataset);
    src.available.assign(model.modality_count(), false);
    for (auto s : sources) {
        if (s >= model.modality_count()) throw ContractError("iw_conditional: source index out of range");
        if (s == target) throw ContractError("iw_conditional: target cannot be a source");
        src.available[s] = true;
    }
    for (std::size_t m = 0; m < src.data.size(); ++m)
        if (!src.available[m]) src.data[m] = Tensor(src.data[m].shape(), 0.0);
    const GaussianBatch q = encode_sample(model, src);
    const LikelihoodKind kind = model.spec(target).likelihood;
    std::vector<double> per_datum;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Rng rng = datum_rng(options, "conditional", i);
        Proposal p = draw(q.mean.row_span(i), q.logvar.row_span(i), options.num_samples, rng);
        ModelGraph mg(model);
        std::vector<double> w = p.log_ratio;
        add_data_loglik(w, kind, mg.decode_to_data(target, mg.input(p.z)).value(), dataset.data[target].row_span(i));
        for (auto& v : w) v += options.log_weight_offset;
        per_datum.push_back(log_mean_exp(w));
    }
    return summarize(per_datum, options.num_samples);
}

namespace {

std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

double coherence_accuracy(const MuseModel& model, const std::vector<std::size_t>& sources, std::size_t target,
                          const MultimodalDataset& dataset) {
    if (target >= model.modality_count()) throw ContractError("coherence_accuracy: target index out of range");
    if (model.spec(target).likelihood != LikelihoodKind::Categorical)
        throw ContractError("coherence_accuracy: target modality '" + model.spec(target).name + "' is not categorical");
    std::map<std::size_t, Tensor> src;
    for (auto s : sources) src.emplace(s, dataset.data.at(s));
    const Tensor gen = cross_modal_generate(model, src, target);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (argmax(gen.row_span(i)) == argmax(dataset.data[target].row_span(i))) ++ok;
    return static_cast<double>(ok) / static_cast<double>(dataset.size());
}

double bar_angle_coherence(const MuseModel& model, const MultimodalDataset& dataset, std::size_t bins) {
    if (dataset.angles.size() != dataset.size()) throw ContractError("bar_angle_coherence: dataset has no angles");
    if (bins == 0) throw ContractError("bar_angle_coherence: bins must be positive");
    const std::size_t img = dataset.modality_index("image");
    const std::size_t ang = dataset.modality_index("angle");
    const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(dataset.data[img].cols())));
    const Tensor gen = cross_modal_generate(model, {{ang, dataset.data[ang]}}, img);
    const double window = std::numbers::pi / (2.0 * static_cast<double>(bins));
    std::size_t ok = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const double d = std::remainder(estimate_bar_angle(gen.row_span(i), side) - dataset.angles[i], std::numbers::pi);
        if (std::abs(d) < window) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(dataset.size());
}

std::vector<int> Classifier::predict(const Tensor& x) const {
    Graph g;
    ParamBinder binder(g, params);
    Var out = mlp_forward(binder, "clf", g.constant(x), sizes.size() - 1, Activation::Relu);
    std::vector<int> labels;
    for (std::size_t r = 0; r < x.rows(); ++r) labels.push_back(static_cast<int>(argmax(out.value().row_span(r))));
    return labels;
}

double Classifier::accuracy(const Tensor& x, const std::vector<int>& labels) const {
    const auto pred = predict(x);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels.at(i);
    return static_cast<double>(ok) / static_cast<double>(pred.size());
}

Classifier train_classifier(const Tensor& x, const std::vector<int>& labels, std::size_t classes,
                            const std::vector<std::size_t>& hidden, std::size_t epochs, std::uint64_t seed) {
    if (labels.size() != x.rows()) throw ContractError("train_classifier: label count differs from rows");
    Classifier c;
    c.sizes = {x.cols()};
    c.sizes.insert(c.sizes.end(), hidden.begin(), hidden.end());
    c.sizes.push_back(classes);
    Rng init = Rng(seed).split("classifier");
    init_mlp(c.params, "clf", c.sizes, init);
    Tensor onehot({x.rows(), classes}, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    const AdamConfig adam{};
    for (std::size_t e = 0; e < epochs; ++e) {
        for (const auto& idx : batch_indices(x.rows(), 64, mix64(seed + e), true)) {
            Graph g;
            ParamBinder binder(g, c.params);
            Var logits = mlp_forward(binder, "clf", g.constant(x.gather_rows(idx)), c.sizes.size() - 1, Activation::Relu);
            Var loss = negate(mean_all(sum(g.constant(onehot.gather_rows(idx)) * log_softmax(logits), 1)));
            g.backward(loss);
            c.params.adam_step(g.param_grads(), adam);
        }
    }
    return c;
}

double cross_generation_accuracy(const MuseModel& model, std::size_t label_modality, std::size_t image_modality,
                                 const MultimodalDataset& dataset, const Classifier& judge) {
    const Tensor images = cross_modal_generate(model, {{label_modality, dataset.data.at(label_modality)}}, image_modality);
    const auto pred = judge.predict(images);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        ok += static_cast<std::size_t>(pred[i]) == argmax(dataset.data[label_modality].row_span(i));
    return static_cast<double>(ok) / static_cast<double>(pred.size());
}

std::string iw_csv(const std::vector<IwRow>& rows) {
    std::ostringstream out;
    out << "metric,modality,N,value,stderr,seed\n";
    for (const auto& r : rows)
        out << r.metric << ',' << r.modality << ',' << r.num_samples << ',' << format_double(r.value) << ','
            << format_double(r.std_error) << ',' << r.seed << '\n';
    return out.str();
}

}  // namespace muse
