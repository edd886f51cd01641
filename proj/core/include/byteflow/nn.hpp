#pragma once

// Tape-based reverse-mode differentiation over 2-D row-major tensors.
//
// A Graph records nodes in creation order; backward() walks the tape in
// reverse, so the creation order is already a topological order. Each op is
// a fused block with a hand-written backward pass: embedding, scale-only
// layer norm, rotary sliding-window multi-head attention, SwiGLU gate,
// 4-tap causal Canon mixing, row gather, binned upsampling and softmax
// cross-entropy.
//
// Parameters live outside the graph. A parameter node reads the parameter's
// value in place and accumulates straight into Parameter::grad, which the
// caller zeroes between steps.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "byteflow/bytes.hpp"

namespace byteflow::nn {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool decay = true;  // false for norm scales and Canon gates

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool wd = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::Zero(value.rows(), value.cols())), decay(wd) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node on a Graph's tape.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Tensor& value() const;
    /// Gradient accumulated so far; zero-sized until something flows back.
    [[nodiscard]] const Tensor& grad() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] bool requires_grad() const;
    [[nodiscard]] Graph* graph() const noexcept { return graph_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    /// With `record_gradients` false every node is a constant and no
    /// backward closures are kept (evaluation mode).
    explicit Graph(bool record_gradients = true) : record_(record_gradients) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf holding a copy of `value`.
    Var input(Tensor value, bool requires_grad = false);
    /// Leaf aliasing `p.value`; gradients accumulate into `p.grad`.
    Var param(Parameter& p);

    /// Seeds d(out)/d(out) = 1 for a 1x1 node and runs the tape backwards.
    void backward(Var out);

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    /// (rows, cols) of every node in creation order.
    [[nodiscard]] std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes() const;

    // Op plumbing.
    using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;
    Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var push(Tensor value, std::span<const Var> inputs, BackwardFn fn);
    [[nodiscard]] const Tensor& value_of(std::size_t id) const;
    [[nodiscard]] const Tensor& grad_of(std::size_t id) const;
    [[nodiscard]] bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Zero-initialized gradient buffer of node `v`, or nullptr if `v` does
    /// not require a gradient.
    Tensor* grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Parameter* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool record_ = true;
};

/// Rotary position encoding applied in place to each head slice of x
/// (rows are positions 0..T−1). `inverse` applies the transposed rotation.
void apply_rope(Tensor& x, int heads, double theta, bool inverse = false);

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Row t = table[ids[t]]. Throws OutOfVocab when an id exceeds the table.
Var embed(Var table, std::span<const Symbol> ids);
/// Per-row (x − mean)/sqrt(var + δ), times a learned 1 x d scale.
Var layer_norm(Var x, Var scale);
inline constexpr double kNormStabilizer = 1e-8;

/// Multi-head scaled dot-product attention with rotary encoding; query t sees
/// keys max(0, t−window+1)..t. q, k, v are T x d.
Var attention_core(Var q, Var k, Var v, int heads, std::size_t window, double rope_theta);
/// swish(a) ⊙ b.
Var swish_gate(Var a, Var b);
/// out_t = Σ_{i<4} w_i ⊙ x_{t−i}, zero left padding; w is 4 x d.
Var canon(Var x, Var w);
/// out_i = x[indices[i]].
Var gather_rows(Var x, std::span<const std::size_t> indices);
/// out_t = g[chunk[t]] · banks[bin[t]].
Var binned_upsample(Var g, std::span<const std::size_t> chunk, std::span<const std::size_t> bin,
                    std::span<const Var> banks);
/// Negative log-likelihood in nats of targets under softmax(logits), summed
/// or averaged over rows; 1 x 1.
Var cross_entropy(Var logits, std::span<const Symbol> targets, bool mean = true);

// --- blocks ----------------------------------------------------------------

struct AttentionWeights {
    Parameter* wq = nullptr;
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
    Parameter* wo = nullptr;
};

/// Projects x to Q, K, V, attends within the window, projects back to width d.
Var swa_attention(Var x, const AttentionWeights& w, int heads, std::size_t window, double rope_theta);

/// (swish(x·W1) ⊙ (x·W2))·W3.
Var swiglu(Var x, Parameter& w1, Parameter& w2, Parameter& w3);

}  // namespace byteflow::nn
