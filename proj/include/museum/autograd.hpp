#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "museum/tensor.hpp"

// Minimal tape-free reverse-mode differentiation over Tensor values.
//
// Every op allocates a Node that owns its forward value and, when any input
// requires a gradient, a closure that pushes the node's gradient into its
// parents. backward() walks the graph in reverse topological order. Graphs
// are rebuilt on every forward pass; long-lived parameters are leaf Vars.
namespace museum::ag {

struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    [[nodiscard]] const Tensor& value() const { return node_->value; }
    // Mutable access is for optimizers and finite-difference probes only.
    [[nodiscard]] Tensor& mutable_value() const { return node_->value; }
    [[nodiscard]] const Tensor& grad() const { return node_->grad; }
    [[nodiscard]] bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    [[nodiscard]] const std::vector<int>& shape() const { return node_->value.shape; }
    [[nodiscard]] std::size_t size() const { return node_->value.size(); }
    [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(node_); }
    [[nodiscard]] double item() const;

    void zero_grad() const;
    void set_requires_grad(bool on) const { node_->requires_grad = on; }
    [[nodiscard]] Node* node() const noexcept { return node_.get(); }
    [[nodiscard]] const std::shared_ptr<Node>& ptr() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Seeds d(root)/d(root) = 1 for a scalar root and accumulates gradients
// into every reachable node that requires one.
void backward(const Var& root);

// Elementwise. Either operand may be a single-element tensor, in which case
// it is broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var sqrt(const Var& a);
Var square(const Var& a);
Var silu(const Var& a);
Var sigmoid(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

Var reshape(const Var& a, std::vector<int> shape);

// [m,k] x [k,n]
Var matmul(const Var& a, const Var& b);
// [m,k] x [n,k]^T -> [m,n]; the linear-layer product x W^T.
Var matmul_nt(const Var& a, const Var& b);
// [m,n] + bias[n] on every row.
Var add_row(const Var& a, const Var& bias);
// [C,H,W] + v[C] on every spatial position.
Var add_channel(const Var& x, const Var& v);
Var softmax_rows(const Var& a);

// x[C,H,W], w[O,C,k,k], b[O]; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);
// [C,H,W] <-> [H*W, C]
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& t, int h, int w);

// Copy of base[S,D] with one row replaced by v[D]; gradients flow to both.
Var replace_row(const Var& base, int row, const Var& v);

// KL(softmax(p/tau) || softmax(q/tau)) over the flattened inputs, computed
// in log space. Differentiable in both arguments.
Var softmax_kl(const Var& p_logits, const Var& q_logits, double tau);

// Plain forward helpers shared with inference-only code paths.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

}  // namespace museum::ag
