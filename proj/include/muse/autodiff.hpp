#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

enum class OpKind {
    Input,
    Param,
    MatMul,
    Add,
    Subtract,
    Multiply,
    Negate,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    Sigmoid,
    Relu,
    Swish,
    Tanh,
    Softplus,
    LogSoftmax,
    Concat,
    Slice,
    BiasAdd,
    LogSumExp,
    StopGradient,
    Scale,
    AddScalar,
    Reciprocal,
    Clamp,
};

std::string_view op_name(OpKind kind) noexcept;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = std::numeric_limits<std::size_t>::max();

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
};

struct GraphOptions {
    /// Test hook: scale the backward pass of one op kind to fake a broken
    /// gradient. Never set outside of fault-injection checks.
    std::optional<OpKind> faulty_backward;
    double fault_scale = 1.5;
};

/// Define-by-run computation graph over rank-2 tensors.
///
/// Nodes are appended in evaluation order, so parents always precede
/// children and the node list is a topological order. Every op computes its
/// output eagerly; `recompute()` re-evaluates the whole list from the leaves
/// (used by finite-difference checks and by `forward`).
///
/// Shape rules: binary elementwise ops accept equal shapes, or a right/left
/// operand of shape [1, N] (broadcast over the batch axis), or [1, 1].
class Graph {
public:
    explicit Graph(GraphOptions options = {}) : options_(options) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Named non-trainable leaf; can be replaced through forward().
    Var input(std::string name, Tensor value);
    /// Anonymous constant leaf.
    Var constant(Tensor value);
    /// Named trainable leaf. Names must be unique within the graph.
    Var param(std::string name, Tensor value);
    bool has_leaf(const std::string& name) const { return leaves_.contains(name); }
    Var leaf(const std::string& name);

    /// Attach a label used in error messages.
    Var label(Var v, std::string text);

    /// Register a named output so forward() can report it.
    void mark_output(std::string name, Var v);

    /// Replace named leaves and re-evaluate every node. Returns the values
    /// of all outputs registered with mark_output.
    std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& leaves);
    void recompute();

    /// Reverse sweep from a [1, 1] node. Previous gradients are cleared.
    void backward(Var output);
    /// Gradients of every trainable leaf from the last backward().
    std::map<std::string, Tensor> param_grads() const;
    std::vector<std::string> param_names() const;

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const Tensor& grad(Var v) const;
    Tensor& mutable_leaf_value(const std::string& name);

    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
    /// Elements pushed to a bound by Clamp nodes in the latest evaluation.
    std::size_t clamp_events() const noexcept;

    // Node constructors used by the free-function ops below.
    Var unary(OpKind kind, Var a, double alpha = 0.0, double beta = 0.0);
    Var binary(OpKind kind, Var a, Var b);
    Var reduce(OpKind kind, Var a, std::size_t axis);
    Var slice(Var a, std::size_t begin, std::size_t end);

private:
    struct Node {
        OpKind kind;
        std::size_t a = npos;
        std::size_t b = npos;
        double alpha = 0.0;  // scale / scalar / clamp low
        double beta = 0.0;   // clamp high
        std::size_t i0 = 0;  // axis or slice begin
        std::size_t i1 = 0;  // slice end
        bool requires_grad = false;
        std::size_t clamped = 0;
        std::string name;  // leaf name or label
        Tensor value;
        Tensor grad;
        bool has_grad = false;
    };
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    Var push(Node node);
    void evaluate(std::size_t id);
    void propagate(std::size_t id);
    void accumulate(std::size_t target, const Tensor& g);
    std::string describe(std::size_t id) const;
    void check_finite(std::size_t id) const;

    GraphOptions options_;
    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> leaves_;
    std::map<std::string, std::size_t> outputs_;
};

// Elementwise and structural ops. All return a new node in a.graph.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var negate(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sum(Var a, std::size_t axis);
Var mean(Var a, std::size_t axis);
/// Sum over every element, as a [1, 1] node.
Var sum_all(Var a);
Var mean_all(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var swish(Var a);
Var tanh(Var a);
/// log(1 + exp(x)), computed stably.
Var softplus(Var a);
Var log_softmax(Var a);
Var concat(Var a, Var b);
Var slice(Var a, std::size_t begin, std::size_t end);
/// x [B, N] plus bias [N] or [1, N].
Var bias_add(Var x, Var bias);
Var logsumexp(Var a);
Var stop_gradient(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var reciprocal(Var a);
/// Pass-through gradient strictly inside (lo, hi), zero outside.
Var clamp(Var a, double lo, double hi);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }
inline Var operator-(Var a) { return negate(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }

}  // namespace muse
