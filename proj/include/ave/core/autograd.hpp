#pragma once

// Minimal reverse-mode automatic differentiation over ave::Tensor.
//
// A Var is a shared handle to a graph node. Operations record their inputs
// and a backward closure only while gradient recording is enabled and at
// least one input requires a gradient; otherwise they return constants.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ave/core/kernels.hpp"
#include "ave/core/tensor.hpp"

namespace ave::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    Tensor& ensure_grad();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    static Var parameter(Tensor value) { return Var(std::move(value), true); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    double item() const { return node_->value.item(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    /// Gradient accumulated by backward(); empty until the first backward pass.
    const Tensor& grad() const { return node_->grad; }
    Tensor& mutable_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad();

    /// Runs backpropagation from a scalar. The graph behind this Var is
    /// released afterwards; leaves keep their accumulated gradients.
    void backward() const;

    const NodePtr& node() const { return node_; }

private:
    explicit Var(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;

    friend Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);
};

/// Builds the result of an op; records the graph only when needed.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

bool grad_enabled();

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

Var constant(Tensor value);
Var detach(const Var& x);

// Elementwise ---------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var minimum(const Var& a, const Var& b);

// Broadcasting ----------------------------------------------------------------
/// x: [..., n] + v: [n]
Var add_rowvec(const Var& x, const Var& v);
/// x: [..., n] * v: [n]
Var mul_rowvec(const Var& x, const Var& v);
/// x: [m, n] * c: [m, 1]
Var mul_colvec(const Var& x, const Var& c);
/// x: [1, n] -> [m, n]
Var repeat_rows(const Var& x, std::size_t m);

// Linear algebra ------------------------------------------------------------
Var matmul(const Var& a, const Var& b);
/// x: [m, in] @ w: [in, out] + b: [out]; b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

// Reductions ----------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// [m, n] -> [m, 1]
Var row_sum(const Var& a);
/// [m, n] -> [m, 1]
Var row_mean(const Var& a);

// Shape ---------------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var gather_rows(const Var& a, std::span<const std::size_t> index);

/// Interleaves two batched sequences: a is [batch*na, n], b is [batch*nb, n];
/// result is [batch*(na+nb), n] with each sample's a-rows followed by its b-rows.
Var concat_seq(const Var& a, const Var& b, std::size_t batch);

// Neural-network primitives ---------------------------------------------------
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var log_softmax_rows(const Var& x);

/// Multi-head scaled dot-product attention. The head-resolved attention
/// probabilities ([batch, heads, q_len, k_len]) are written to `probs` when
/// it is non-null; they are not differentiable.
Var attention(const Var& q, const Var& k, const Var& v, const kernels::AttentionShape& shape,
              std::span<const unsigned char> key_mask, Tensor* probs = nullptr);

/// Channels-last convolution. x: [batch, h*w*c_in], w: [k*k*c_in, c_out],
/// b: [c_out]; result [batch, out_h*out_w*c_out].
Var conv2d(const Var& x, const Var& w, const Var& b, const kernels::ConvShape& shape);

} // namespace ave::ag
