#include "muse/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "muse/errors.hpp"

namespace muse {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using MapM = Eigen::Map<RowMatrix>;

MapC as_matrix(const Tensor& t) {
    return MapC(t.storage().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapM as_matrix(Tensor& t) {
    return MapM(t.storage().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

bool broadcasts_to(const Shape& x, const Shape& target) {
    if (x.size() != 2 || target.size() != 2) return false;
    if (x == target) return true;
    if (x[0] == 1 && x[1] == target[1]) return true;
    return x[0] == 1 && x[1] == 1;
}

double bcast_at(const Tensor& x, std::size_t r, std::size_t c) {
    const std::size_t rr = x.rows() == 1 ? 0 : r;
    const std::size_t cc = x.cols() == 1 ? 0 : c;
    return x.storage()[rr * x.cols() + cc];
}

// Sum a full-size gradient down to the operand's (possibly broadcast) shape.
Tensor reduce_to(const Tensor& g, const Shape& shape) {
    if (g.shape() == shape) return g;
    Tensor out(shape, 0.0);
    const std::size_t rows = g.rows(), cols = g.cols();
    const bool row_b = shape[0] == 1, col_b = shape[1] == 1;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.storage()[(row_b ? 0 : r) * shape[1] + (col_b ? 0 : c)] += g.storage()[r * cols + c];
    return out;
}

void require_rank2(const Tensor& t, std::string_view op, std::size_t id) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + " at node #" + std::to_string(id) + " expects a rank-2 operand, got " +
                         shape_to_string(t.shape()));
}

}  // namespace

std::string_view op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::Multiply: return "multiply";
        case OpKind::Negate: return "negate";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Square: return "square";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Relu: return "relu";
        case OpKind::Swish: return "swish";
        case OpKind::Tanh: return "tanh";
        case OpKind::Softplus: return "softplus";
        case OpKind::LogSoftmax: return "log_softmax";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::BiasAdd: return "bias_add";
        case OpKind::LogSumExp: return "logsumexp";
        case OpKind::StopGradient: return "stop_gradient";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Reciprocal: return "reciprocal";
        case OpKind::Clamp: return "clamp";
    }
    return "unknown";
}

const Tensor& Var::value() const { return graph->value(*this); }
const Tensor& Var::grad() const { return graph->grad(*this); }

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    const std::size_t id = nodes_.size() - 1;
    if (nodes_[id].kind != OpKind::Input && nodes_[id].kind != OpKind::Param) {
        try {
            evaluate(id);
        } catch (...) {
            nodes_.pop_back();
            throw;
        }
    }
    return Var{this, id};
}

Var Graph::input(std::string name, Tensor value) {
    if (leaves_.contains(name)) throw ContractError("duplicate leaf name '" + name + "'");
    Node n{.kind = OpKind::Input};
    n.name = name;
    n.value = std::move(value);
    Var v = push(std::move(n));
    leaves_.emplace(std::move(name), v.id);
    return v;
}

Var Graph::constant(Tensor value) {
    Node n{.kind = OpKind::Input};
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::param(std::string name, Tensor value) {
    if (leaves_.contains(name)) throw ContractError("duplicate leaf name '" + name + "'");
    if (!value.all_finite()) throw NumericError("parameter '" + name + "' holds non-finite values");
    Node n{.kind = OpKind::Param};
    n.name = name;
    n.value = std::move(value);
    n.requires_grad = true;
    Var v = push(std::move(n));
    leaves_.emplace(std::move(name), v.id);
    return v;
}

Var Graph::leaf(const std::string& name) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ContractError("no leaf named '" + name + "'");
    return Var{this, it->second};
}

Var Graph::label(Var v, std::string text) {
    nodes_.at(v.id).name = std::move(text);
    return v;
}

void Graph::mark_output(std::string name, Var v) { outputs_[std::move(name)] = v.id; }

Tensor& Graph::mutable_leaf_value(const std::string& name) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ContractError("no leaf named '" + name + "'");
    return nodes_[it->second].value;
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& leaves) {
    for (const auto& [name, value] : leaves) {
        auto it = leaves_.find(name);
        if (it == leaves_.end()) throw ContractError("forward: no leaf named '" + name + "'");
        Node& n = nodes_[it->second];
        if (n.value.shape() != value.shape())
            throw ShapeError("forward: leaf '" + name + "' expects shape " + shape_to_string(n.value.shape()) +
                             ", got " + shape_to_string(value.shape()));
        n.value = value;
    }
    recompute();
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : outputs_) out.emplace(name, nodes_[id].value);
    return out;
}

void Graph::recompute() {
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const OpKind k = nodes_[id].kind;
        if (k != OpKind::Input && k != OpKind::Param) evaluate(id);
    }
}

std::size_t Graph::clamp_events() const noexcept {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n.clamped;
    return total;
}

std::string Graph::describe(std::size_t id) const {
    const Node& n = nodes_[id];
    std::string s = std::string(op_name(n.kind)) + " at node #" + std::to_string(id);
    if (!n.name.empty()) s += " ('" + n.name + "')";
    return s;
}

void Graph::check_finite(std::size_t id) const {
    if (!nodes_[id].value.all_finite()) throw NumericError("non-finite output from " + describe(id));
}

Var Graph::unary(OpKind kind, Var a, double alpha, double beta) {
    if (a.graph != this) throw ContractError("operand belongs to another graph");
    Node n{.kind = kind, .a = a.id, .alpha = alpha, .beta = beta};
    n.requires_grad = kind != OpKind::StopGradient && nodes_[a.id].requires_grad;
    return push(std::move(n));
}

Var Graph::binary(OpKind kind, Var a, Var b) {
    if (a.graph != this || b.graph != this) throw ContractError("operand belongs to another graph");
    Node n{.kind = kind, .a = a.id, .b = b.id};
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return push(std::move(n));
}

Var Graph::reduce(OpKind kind, Var a, std::size_t axis) {
    if (a.graph != this) throw ContractError("operand belongs to another graph");
    if (axis > 1) throw ShapeError(std::string(op_name(kind)) + ": axis must be 0 or 1");
    Node n{.kind = kind, .a = a.id, .i0 = axis};
    n.requires_grad = nodes_[a.id].requires_grad;
    return push(std::move(n));
}

Var Graph::slice(Var a, std::size_t begin, std::size_t end) {
    if (a.graph != this) throw ContractError("operand belongs to another graph");
    Node n{.kind = OpKind::Slice, .a = a.id, .i0 = begin, .i1 = end};
    n.requires_grad = nodes_[a.id].requires_grad;
    return push(std::move(n));
}

void Graph::evaluate(std::size_t id) {
    Node& n = nodes_[id];
    const Tensor& A = nodes_[n.a].value;
    const std::string where = std::string(op_name(n.kind));

    auto elementwise = [&](auto fn) {
        require_rank2(A, where, id);
        Tensor out(A.shape());
        const auto& src = A.storage();
        auto& dst = out.storage();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
        n.value = std::move(out);
    };

    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Param:
            return;
        case OpKind::MatMul: {
            const Tensor& B = nodes_[n.b].value;
            require_rank2(A, where, id);
            require_rank2(B, where, id);
            if (A.cols() != B.rows())
                throw ShapeError("matmul at node #" + std::to_string(id) + ": inner dimensions differ, " +
                                 shape_to_string(A.shape()) + " x " + shape_to_string(B.shape()));
            Tensor out({A.rows(), B.cols()});
            as_matrix(out).noalias() = as_matrix(A) * as_matrix(B);
            n.value = std::move(out);
            break;
        }
        case OpKind::Add:
        case OpKind::Subtract:
        case OpKind::Multiply: {
            const Tensor& B = nodes_[n.b].value;
            require_rank2(A, where, id);
            require_rank2(B, where, id);
            Shape out_shape;
            if (broadcasts_to(B.shape(), A.shape()))
                out_shape = A.shape();
            else if (broadcasts_to(A.shape(), B.shape()))
                out_shape = B.shape();
            else
                throw ShapeError(where + " at node #" + std::to_string(id) + ": incompatible shapes " +
                                 shape_to_string(A.shape()) + " and " + shape_to_string(B.shape()));
            Tensor out(out_shape);
            auto op = [k = n.kind](double x, double y) {
                return k == OpKind::Add ? x + y : k == OpKind::Subtract ? x - y : x * y;
            };
            if (A.shape() == B.shape()) {
                const auto &a = A.storage(), &b = B.storage();
                auto& o = out.storage();
                for (std::size_t i = 0; i < o.size(); ++i) o[i] = op(a[i], b[i]);
            } else {
                for (std::size_t r = 0; r < out.rows(); ++r)
                    for (std::size_t c = 0; c < out.cols(); ++c)
                        out.at(r, c) = op(bcast_at(A, r, c), bcast_at(B, r, c));
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::BiasAdd: {
            const Tensor& B = nodes_[n.b].value;
            require_rank2(A, where, id);
            const bool ok = (B.rank() == 1 && B.dim(0) == A.cols()) ||
                            (B.rank() == 2 && B.rows() == 1 && B.cols() == A.cols());
            if (!ok)
                throw ShapeError("bias_add at node #" + std::to_string(id) + ": bias " + shape_to_string(B.shape()) +
                                 " does not match " + shape_to_string(A.shape()));
            Tensor out(A.shape());
            const std::size_t cols = A.cols();
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = A.at(r, c) + B[c];
            n.value = std::move(out);
            break;
        }
        case OpKind::Negate: elementwise([](double x) { return -x; }); break;
        case OpKind::Exp: elementwise([](double x) { return std::exp(x); }); break;
        case OpKind::Log: elementwise([](double x) { return std::log(x); }); break;
        case OpKind::Square: elementwise([](double x) { return x * x; }); break;
        case OpKind::Sigmoid: elementwise(stable_sigmoid); break;
        case OpKind::Relu: elementwise([](double x) { return x > 0.0 ? x : 0.0; }); break;
        case OpKind::Swish: elementwise([](double x) { return x * stable_sigmoid(x); }); break;
        case OpKind::Tanh: elementwise([](double x) { return std::tanh(x); }); break;
        case OpKind::Softplus: elementwise(stable_softplus); break;
        case OpKind::StopGradient: elementwise([](double x) { return x; }); break;
        case OpKind::Scale: elementwise([s = n.alpha](double x) { return s * x; }); break;
        case OpKind::AddScalar: elementwise([s = n.alpha](double x) { return s + x; }); break;
        case OpKind::Reciprocal: elementwise([](double x) { return 1.0 / x; }); break;
        case OpKind::Clamp: {
            std::size_t clamped = 0;
            elementwise([&, lo = n.alpha, hi = n.beta](double x) {
                if (x < lo) {
                    ++clamped;
                    return lo;
                }
                if (x > hi) {
                    ++clamped;
                    return hi;
                }
                return x;
            });
            n.clamped = clamped;
            break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
            require_rank2(A, where, id);
            const std::size_t rows = A.rows(), cols = A.cols();
            Tensor out(n.i0 == 0 ? Shape{1, cols} : Shape{rows, 1});
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) out[n.i0 == 0 ? c : r] += A.at(r, c);
            if (n.kind == OpKind::Mean) {
                const double d = static_cast<double>(n.i0 == 0 ? rows : cols);
                for (auto& v : out.storage()) v /= d;
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::LogSumExp:
        case OpKind::LogSoftmax: {
            require_rank2(A, where, id);
            const std::size_t rows = A.rows(), cols = A.cols();
            Tensor out(n.kind == OpKind::LogSumExp ? Shape{rows, 1} : A.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                auto row = A.row_span(r);
                const double m = *std::max_element(row.begin(), row.end());
                double s = 0.0;
                for (double v : row) s += std::exp(v - m);
                const double lse = m + std::log(s);
                if (n.kind == OpKind::LogSumExp)
                    out[r] = lse;
                else
                    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = row[c] - lse;
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::Concat: {
            const Tensor& B = nodes_[n.b].value;
            require_rank2(A, where, id);
            require_rank2(B, where, id);
            if (A.rows() != B.rows())
                throw ShapeError("concat at node #" + std::to_string(id) + ": row counts differ, " +
                                 shape_to_string(A.shape()) + " and " + shape_to_string(B.shape()));
            Tensor out({A.rows(), A.cols() + B.cols()});
            for (std::size_t r = 0; r < A.rows(); ++r) {
                std::copy(A.row_span(r).begin(), A.row_span(r).end(), out.row_span(r).begin());
                std::copy(B.row_span(r).begin(), B.row_span(r).end(),
                          out.row_span(r).begin() + static_cast<std::ptrdiff_t>(A.cols()));
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::Slice: {
            require_rank2(A, where, id);
            if (n.i0 >= n.i1 || n.i1 > A.cols())
                throw ShapeError("slice at node #" + std::to_string(id) + ": range [" + std::to_string(n.i0) + "," +
                                 std::to_string(n.i1) + ") invalid for " + shape_to_string(A.shape()));
            Tensor out({A.rows(), n.i1 - n.i0});
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = n.i0; c < n.i1; ++c) out.at(r, c - n.i0) = A.at(r, c);
            n.value = std::move(out);
            break;
        }
    }
    check_finite(id);
}

const Tensor& Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.has_grad) throw ContractError("no gradient recorded for " + describe(v.id));
    return n.grad;
}

void Graph::accumulate(std::size_t target, const Tensor& g) {
    Node& t = nodes_[target];
    if (!t.requires_grad) return;
    if (!t.has_grad) {
        t.grad = g;
        t.has_grad = true;
        return;
    }
    auto& dst = t.grad.storage();
    const auto& src = g.storage();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var output) {
    if (output.graph != this) throw ContractError("backward: output belongs to another graph");
    const Tensor& out = nodes_.at(output.id).value;
    if (out.size() != 1) throw ContractError("backward: output must be a scalar, got " + shape_to_string(out.shape()));
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    // Leaves always report a gradient (zero if unreachable).
    for (auto& n : nodes_)
        if (n.kind == OpKind::Param) {
            n.grad = Tensor(n.value.shape(), 0.0);
            n.has_grad = true;
        }
    Node& o = nodes_[output.id];
    if (!o.requires_grad) return;
    o.grad = Tensor(out.shape(), 1.0);
    o.has_grad = true;
    for (std::size_t id = output.id + 1; id-- > 0;)
        if (nodes_[id].has_grad && nodes_[id].kind != OpKind::Param && nodes_[id].kind != OpKind::Input)
            propagate(id);
}

void Graph::propagate(std::size_t id) {
    Node& n = nodes_[id];
    Tensor G = n.grad;
    if (options_.faulty_backward && *options_.faulty_backward == n.kind)
        for (auto& v : G.storage()) v *= options_.fault_scale;
    const Tensor& A = nodes_[n.a].value;
    const Tensor& Y = n.value;

    auto pointwise = [&](auto dfn) {
        if (!nodes_[n.a].requires_grad) return;
        Tensor ga(A.shape());
        const auto &x = A.storage(), &y = Y.storage(), &g = G.storage();
        auto& o = ga.storage();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = g[i] * dfn(x[i], y[i]);
        accumulate(n.a, ga);
    };

    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Param:
        case OpKind::StopGradient:
            return;
        case OpKind::MatMul: {
            const Tensor& B = nodes_[n.b].value;
            if (nodes_[n.a].requires_grad) {
                Tensor ga(A.shape());
                as_matrix(ga).noalias() = as_matrix(G) * as_matrix(B).transpose();
                accumulate(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                Tensor gb(B.shape());
                as_matrix(gb).noalias() = as_matrix(A).transpose() * as_matrix(G);
                accumulate(n.b, gb);
            }
            return;
        }
        case OpKind::Add:
        case OpKind::Subtract: {
            const Tensor& B = nodes_[n.b].value;
            if (nodes_[n.a].requires_grad) accumulate(n.a, reduce_to(G, A.shape()));
            if (nodes_[n.b].requires_grad) {
                Tensor gb = reduce_to(G, B.shape());
                if (n.kind == OpKind::Subtract)
                    for (auto& v : gb.storage()) v = -v;
                accumulate(n.b, gb);
            }
            return;
        }
        case OpKind::Multiply: {
            const Tensor& B = nodes_[n.b].value;
            const std::size_t rows = G.rows(), cols = G.cols();
            if (nodes_[n.a].requires_grad) {
                Tensor full(G.shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) full.at(r, c) = G.at(r, c) * bcast_at(B, r, c);
                accumulate(n.a, reduce_to(full, A.shape()));
            }
            if (nodes_[n.b].requires_grad) {
                Tensor full(G.shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) full.at(r, c) = G.at(r, c) * bcast_at(A, r, c);
                accumulate(n.b, reduce_to(full, B.shape()));
            }
            return;
        }
        case OpKind::BiasAdd: {
            if (nodes_[n.a].requires_grad) accumulate(n.a, G);
            if (nodes_[n.b].requires_grad) {
                const Tensor& B = nodes_[n.b].value;
                Tensor gb(B.shape(), 0.0);
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) gb[c] += G.at(r, c);
                accumulate(n.b, gb);
            }
            return;
        }
        case OpKind::Negate: pointwise([](double, double) { return -1.0; }); return;
        case OpKind::Exp: pointwise([](double, double y) { return y; }); return;
        case OpKind::Log: pointwise([](double x, double) { return 1.0 / x; }); return;
        case OpKind::Square: pointwise([](double x, double) { return 2.0 * x; }); return;
        case OpKind::Sigmoid: pointwise([](double, double y) { return y * (1.0 - y); }); return;
        case OpKind::Relu: pointwise([](double x, double) { return x > 0.0 ? 1.0 : 0.0; }); return;
        case OpKind::Swish:
            pointwise([](double x, double) {
                const double s = stable_sigmoid(x);
                return s + x * s * (1.0 - s);
            });
            return;
        case OpKind::Tanh: pointwise([](double, double y) { return 1.0 - y * y; }); return;
        case OpKind::Softplus: pointwise([](double x, double) { return stable_sigmoid(x); }); return;
        case OpKind::Scale: pointwise([s = n.alpha](double, double) { return s; }); return;
        case OpKind::AddScalar: pointwise([](double, double) { return 1.0; }); return;
        case OpKind::Reciprocal: pointwise([](double, double y) { return -y * y; }); return;
        case OpKind::Clamp:
            pointwise([lo = n.alpha, hi = n.beta](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
            return;
        case OpKind::Sum:
        case OpKind::Mean: {
            if (!nodes_[n.a].requires_grad) return;
            const std::size_t rows = A.rows(), cols = A.cols();
            const double d = n.kind == OpKind::Mean ? static_cast<double>(n.i0 == 0 ? rows : cols) : 1.0;
            Tensor ga(A.shape());
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) = G[n.i0 == 0 ? c : r] / d;
            accumulate(n.a, ga);
            return;
        }
        case OpKind::LogSumExp: {
            if (!nodes_[n.a].requires_grad) return;
            Tensor ga(A.shape());
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = 0; c < A.cols(); ++c) ga.at(r, c) = G[r] * std::exp(A.at(r, c) - Y[r]);
            accumulate(n.a, ga);
            return;
        }
        case OpKind::LogSoftmax: {
            if (!nodes_[n.a].requires_grad) return;
            Tensor ga(A.shape());
            for (std::size_t r = 0; r < A.rows(); ++r) {
                double gs = 0.0;
                for (std::size_t c = 0; c < A.cols(); ++c) gs += G.at(r, c);
                for (std::size_t c = 0; c < A.cols(); ++c) ga.at(r, c) = G.at(r, c) - std::exp(Y.at(r, c)) * gs;
            }
            accumulate(n.a, ga);
            return;
        }
        case OpKind::Concat: {
            const Tensor& B = nodes_[n.b].value;
            if (nodes_[n.a].requires_grad) {
                Tensor ga(A.shape());
                for (std::size_t r = 0; r < A.rows(); ++r)
                    for (std::size_t c = 0; c < A.cols(); ++c) ga.at(r, c) = G.at(r, c);
                accumulate(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                Tensor gb(B.shape());
                for (std::size_t r = 0; r < B.rows(); ++r)
                    for (std::size_t c = 0; c < B.cols(); ++c) gb.at(r, c) = G.at(r, A.cols() + c);
                accumulate(n.b, gb);
            }
            return;
        }
        case OpKind::Slice: {
            if (!nodes_[n.a].requires_grad) return;
            Tensor ga(A.shape(), 0.0);
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = n.i0; c < n.i1; ++c) ga.at(r, c) = G.at(r, c - n.i0);
            accumulate(n.a, ga);
            return;
        }
    }
}

std::map<std::string, Tensor> Graph::param_grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& n : nodes_)
        if (n.kind == OpKind::Param) out.emplace(n.name, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
    return out;
}

std::vector<std::string> Graph::param_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
        if (n.kind == OpKind::Param) out.push_back(n.name);
    return out;
}

Var matmul(Var a, Var b) { return a.graph->binary(OpKind::MatMul, a, b); }
Var add(Var a, Var b) { return a.graph->binary(OpKind::Add, a, b); }
Var subtract(Var a, Var b) { return a.graph->binary(OpKind::Subtract, a, b); }
Var multiply(Var a, Var b) { return a.graph->binary(OpKind::Multiply, a, b); }
Var negate(Var a) { return a.graph->unary(OpKind::Negate, a); }
Var exp(Var a) { return a.graph->unary(OpKind::Exp, a); }
Var log(Var a) { return a.graph->unary(OpKind::Log, a); }
Var square(Var a) { return a.graph->unary(OpKind::Square, a); }
Var sum(Var a, std::size_t axis) { return a.graph->reduce(OpKind::Sum, a, axis); }
Var mean(Var a, std::size_t axis) { return a.graph->reduce(OpKind::Mean, a, axis); }
Var sum_all(Var a) { return sum(sum(a, 1), 0); }
Var mean_all(Var a) { return mean(mean(a, 1), 0); }
Var sigmoid(Var a) { return a.graph->unary(OpKind::Sigmoid, a); }
Var relu(Var a) { return a.graph->unary(OpKind::Relu, a); }
Var swish(Var a) { return a.graph->unary(OpKind::Swish, a); }
Var tanh(Var a) { return a.graph->unary(OpKind::Tanh, a); }
Var softplus(Var a) { return a.graph->unary(OpKind::Softplus, a); }
Var log_softmax(Var a) { return a.graph->unary(OpKind::LogSoftmax, a); }
Var concat(Var a, Var b) { return a.graph->binary(OpKind::Concat, a, b); }
Var slice(Var a, std::size_t begin, std::size_t end) { return a.graph->slice(a, begin, end); }
Var bias_add(Var x, Var bias) { return x.graph->binary(OpKind::BiasAdd, x, bias); }
Var logsumexp(Var a) { return a.graph->unary(OpKind::LogSumExp, a); }
Var stop_gradient(Var a) { return a.graph->unary(OpKind::StopGradient, a); }
Var scale(Var a, double factor) { return a.graph->unary(OpKind::Scale, a, factor); }
Var add_scalar(Var a, double c) { return a.graph->unary(OpKind::AddScalar, a, c); }
Var reciprocal(Var a) { return a.graph->unary(OpKind::Reciprocal, a); }
Var clamp(Var a, double lo, double hi) {
    if (!(lo < hi)) throw ContractError("clamp: empty range");
    return a.graph->unary(OpKind::Clamp, a, lo, hi);
}

}  // namespace muse
