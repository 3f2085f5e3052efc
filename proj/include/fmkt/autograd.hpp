#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fmkt/tensor.hpp"

namespace fmkt::autograd {

// Reverse-mode automatic differentiation over Tensor values. Graphs are built
// eagerly through shared_ptr-linked nodes, so concurrent forward passes over
// shared read-only parameters build disjoint graphs without global state.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // scatter self.grad into parents

    bool has_grad = false;
    Tensor& ensure_grad();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad();
    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Thread-local switch: when disabled, ops produce constant leaves so
// inference builds no graph.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }

private:
    bool prev_;
};

// Runs reverse accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

Var constant(Tensor value);

// --- elementwise / scalar ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var relu(const Var& a);
Var silu(const Var& a);
Var log_v(const Var& a);
Var sqrt_v(const Var& a);

// --- reductions ---
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// --- shape ---
Var reshape(const Var& a, std::vector<int> shape);
Var detach(const Var& a);

// --- linear algebra / nn primitives (x is batch-major) ---
// y[b,o] = sum_i x[b,i] * w[o,i] + bias[o]
Var linear(const Var& x, const Var& w, const Var& bias);
// x [B,C,H,W], w [O,C,kh,kw], bias [O]; stride 1, zero padding `pad`
Var conv2d(const Var& x, const Var& w, const Var& bias, int pad);
// rows of [B,C]
Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);
// picks x[b, labels[b]] -> [B]
Var select_class(const Var& x, const std::vector<int>& labels);
// mean_b -log_softmax(x)[b, labels[b]]
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

// --- normalization ---
// x [B,C,H,W] (or [B,C]); normalizes each (sample, group) slice, affine per channel
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps);
// x [B,C,H,W] (or [B,C]); normalizes over channels at each spatial position
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps);
// standardizes each channel over (batch, spatial); used by PKD-style losses
Var standardize_per_channel(const Var& x, double eps);

// --- statistics ---
// mean over rows (axis=1 slices) or columns of Pearson correlation between
// matching slices of u and v, both [B,C]
Var pearson_mean_rows(const Var& u, const Var& v, double eps);
Var pearson_mean_cols(const Var& u, const Var& v, double eps);

// --- attention / pooling / misc ---
// e[b,j] = t[b]*w[j] + bias[j] (learned affine embedding of scalar time)
Var affine_time(const std::vector<double>& t, const Var& w, const Var& bias);
// x [B,C,H,W] + e [B,C] broadcast over spatial; for [B,C] inputs plain add
Var add_channel_bias(const Var& x, const Var& e);
// x [B,C,H,W] -> [B,C]
Var global_avg_pool(const Var& x);
// full multi-head self-attention over spatial tokens with learned additive
// position bias [heads,T,T]; projections are [C,C] with [C] biases
Var attention_full(const Var& x, const Var& wq, const Var& bq, const Var& wk, const Var& bk,
                   const Var& wv, const Var& bv, const Var& wo, const Var& bo,
                   const Var& pos_bias, int heads);

}  // namespace fmkt::autograd
