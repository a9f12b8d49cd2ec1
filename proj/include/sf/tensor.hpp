#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sf/rng.hpp"

namespace sf {

// Reverse-mode autodiff over dense row-major f64 tensors of rank 1 or 2.
// A Tensor is a cheap handle onto a shared node; ops build a backward graph
// that backward() consumes once and frees.

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OpKind {
    Matmul,
    Add,
    Sub,
    MulElem,
    Scale,
    Mean,
    Sum,
    Transpose,
    Reshape,
    Concat,
    Slice,
    SoftmaxLastdim,
    LayerNorm,
    Gelu,
    Relu,
    EmbeddingLookup,
    L1Loss,
    L2NormalizeLastdim,
};

const char* op_name(OpKind k);

// Shape rules, documented once here:
//   Matmul             [m,k] x [k,n] -> [m,n]
//   Add/Sub/MulElem    same shape, or a [m,n] with b [n] / [1,n] broadcast over rows
//   Scale              any shape, attrs.scalar is the multiplier
//   Mean/Sum           any shape -> [1] (full reduction)
//   Transpose          [m,n] -> [n,m]
//   Reshape            any -> attrs.dims (same element count)
//   Concat             k inputs along attrs.axis (0 or 1); other dims equal
//   Slice              [m,n], attrs.axis in {0,1}, rows/cols [start, stop)
//   SoftmaxLastdim     rows of [m,n] (rank-1 treated as one row)
//   LayerNorm          per-row zero-mean unit-variance over the last dim (no affine)
//   Gelu/Relu          elementwise, any shape
//   EmbeddingLookup    table [v,d], attrs.ids -> [len(ids), d]
//   L1Loss             two equal-shape inputs -> [1] mean absolute error
//   L2NormalizeLastdim per-row x / max(||x||, eps)
struct OpAttrs {
    double scalar = 0.0;
    int axis = 0;
    int start = 0;
    int stop = 0;
    std::vector<int> dims;
    std::vector<int> ids;
};

struct TensorImpl;

struct BackwardNode {
    OpKind kind;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    // Accumulates parent grads from out.grad. Saved activations live in the closure.
    std::function<void(TensorImpl& out)> backward_fn;
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward()
    bool requires_grad = false;
    std::unique_ptr<BackwardNode> node;

    int numel() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int numel() const { return impl_->numel(); }
    int rows() const;
    int cols() const;

    std::span<const double> data() const { return impl_->data; }
    std::span<double> data_mut() { return impl_->data; }
    double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
    double at(int r, int c) const { return impl_->data[static_cast<size_t>(r) * cols() + c]; }

    // value of a one-element tensor
    double value() const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad() { impl_->grad.clear(); }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
    friend Tensor apply(OpKind, const std::vector<Tensor>&, const OpAttrs&);
};

// Forward-evaluates one op and records a backward node when any input requires grad.
Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

// Populates grads of every requires_grad tensor reachable from `loss`,
// accumulating additively across fan-out. Frees the traversed graph.
void backward(const Tensor& loss);

// Convenience wrappers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> dims);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int stop);
Tensor softmax_lastdim(const Tensor& a);
Tensor layer_norm(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor l1_loss(const Tensor& a, const Tensor& b);
Tensor l2_normalize_lastdim(const Tensor& a);

// cosine_sim(a, b) = a.b / (max(||a||,eps) * max(||b||,eps)), differentiable in both.
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// Max over all parameter entries of |analytic - central difference| relative error,
// with central differences of step eps. f must be a deterministic scalar function
// of the given parameters.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps);

constexpr double kNormEps = 1e-8;

}  // namespace sf
