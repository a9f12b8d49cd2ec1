#include "sf/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace sf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

[[noreturn]] void shape_fail(OpKind kind, const std::vector<Tensor>& inputs, const std::string& detail) {
    std::ostringstream os;
    os << op_name(kind) << ": " << detail << " (shapes:";
    for (const auto& t : inputs) os << ' ' << (t.defined() ? shape_str(t.shape()) : std::string("<null>"));
    os << ')';
    throw ShapeError(os.str());
}

void check_positive_shape(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 2)
        throw ShapeError("tensor rank must be 1 or 2, got rank " + std::to_string(shape.size()));
    for (int d : shape)
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
}

// rows/cols view of a rank-1 or rank-2 shape: rank-1 is a single row
int view_rows(const std::vector<int>& s) { return s.size() == 2 ? s[0] : 1; }
int view_cols(const std::vector<int>& s) { return s.size() == 2 ? s[1] : s[0]; }

std::vector<double>& ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

bool wants_grad(const TensorImpl& t) { return t.requires_grad; }

// true if b row-broadcasts onto a: a [m,n], b [n] or [1,n]
bool row_broadcast(const std::vector<int>& a, const std::vector<int>& b) {
    return a.size() == 2 && view_rows(b) == 1 && view_cols(b) == view_cols(a) && a != b;
}

}  // namespace

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Matmul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::MulElem: return "mul_elementwise";
        case OpKind::Scale: return "scale";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::Transpose: return "transpose";
        case OpKind::Reshape: return "reshape";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::SoftmaxLastdim: return "softmax_lastdim";
        case OpKind::LayerNorm: return "layer_norm";
        case OpKind::Gelu: return "gelu";
        case OpKind::Relu: return "relu";
        case OpKind::EmbeddingLookup: return "embedding_lookup";
        case OpKind::L1Loss: return "l1_loss";
        case OpKind::L2NormalizeLastdim: return "l2_normalize_lastdim";
    }
    return "unknown";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    check_positive_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<size_t>(impl->numel()), 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    check_positive_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    if (static_cast<size_t>(impl->numel()) != data.size())
        throw ShapeError("from_data: " + std::to_string(data.size()) + " values for shape " +
                         shape_str(impl->shape));
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.impl_->data) v = stddev * rng.normal();
    return t;
}

int Tensor::rows() const { return view_rows(impl_->shape); }
int Tensor::cols() const { return view_cols(impl_->shape); }

double Tensor::value() const {
    if (numel() != 1) throw ShapeError("value(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

std::span<const double> Tensor::grad() const {
    if (impl_->grad.empty()) throw std::runtime_error("grad(): no gradient present");
    return impl_->grad;
}

std::span<double> Tensor::grad_mut() { return ensure_grad(*impl_); }

namespace {

Tensor make_output(OpKind kind, std::vector<int> shape, const std::vector<Tensor>& inputs,
                   std::function<void(TensorImpl&)> backward_fn) {
    Tensor out = Tensor::zeros(std::move(shape));
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
        out.impl()->requires_grad = true;
        auto node = std::make_unique<BackwardNode>();
        node->kind = kind;
        for (const auto& t : inputs) node->parents.push_back(t.impl());
        node->backward_fn = std::move(backward_fn);
        out.impl()->node = std::move(node);
    }
    return out;
}

Tensor op_matmul(const std::vector<Tensor>& in) {
    if (in.size() != 2) shape_fail(OpKind::Matmul, in, "expects 2 inputs");
    const auto& a = in[0];
    const auto& b = in[1];
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        shape_fail(OpKind::Matmul, in, "inner dimensions must agree");
    const int m = a.rows(), k = a.cols(), n = b.cols();

    auto ai = a.impl();
    auto bi = b.impl();
    Tensor out = make_output(OpKind::Matmul, {m, n}, in, [ai, bi, m, k, n](TensorImpl& o) {
        ConstMatMap G(o.grad.data(), m, n);
        ConstMatMap A(ai->data.data(), m, k);
        ConstMatMap B(bi->data.data(), k, n);
        if (wants_grad(*ai)) {
            MatMap dA(ensure_grad(*ai).data(), m, k);
            dA.noalias() += G * B.transpose();
        }
        if (wants_grad(*bi)) {
            MatMap dB(ensure_grad(*bi).data(), k, n);
            dB.noalias() += A.transpose() * G;
        }
    });
    MatMap O(out.data_mut().data(), m, n);
    ConstMatMap A(a.data().data(), m, k);
    ConstMatMap B(b.data().data(), k, n);
    O.noalias() = A * B;
    return out;
}

enum class Arith { Add, Sub, Mul };

Tensor op_arith(OpKind kind, Arith which, const std::vector<Tensor>& in) {
    if (in.size() != 2) shape_fail(kind, in, "expects 2 inputs");
    const auto& a = in[0];
    const auto& b = in[1];
    const bool bcast = row_broadcast(a.shape(), b.shape());
    if (!bcast && a.shape() != b.shape())
        shape_fail(kind, in, "shapes must match or second input must row-broadcast");

    const int m = a.rows(), n = a.cols();
    auto ai = a.impl();
    auto bi = b.impl();
    Tensor out = make_output(kind, a.shape(), in, [ai, bi, which, bcast, m, n](TensorImpl& o) {
        const double* g = o.grad.data();
        if (wants_grad(*ai)) {
            double* da = ensure_grad(*ai).data();
            const double* bd = bi->data.data();
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) {
                    const size_t i = static_cast<size_t>(r) * n + c;
                    da[i] += (which == Arith::Mul) ? g[i] * bd[bcast ? c : i] : g[i];
                }
        }
        if (wants_grad(*bi)) {
            double* db = ensure_grad(*bi).data();
            const double* ad = ai->data.data();
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) {
                    const size_t i = static_cast<size_t>(r) * n + c;
                    const size_t j = bcast ? c : i;
                    switch (which) {
                        case Arith::Add: db[j] += g[i]; break;
                        case Arith::Sub: db[j] -= g[i]; break;
                        case Arith::Mul: db[j] += g[i] * ad[i]; break;
                    }
                }
        }
    });
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            const size_t i = static_cast<size_t>(r) * n + c;
            const double bv = bd[bcast ? c : i];
            switch (which) {
                case Arith::Add: od[i] = ad[i] + bv; break;
                case Arith::Sub: od[i] = ad[i] - bv; break;
                case Arith::Mul: od[i] = ad[i] * bv; break;
            }
        }
    return out;
}

Tensor op_scale(const std::vector<Tensor>& in, double c) {
    if (in.size() != 1) shape_fail(OpKind::Scale, in, "expects 1 input");
    auto ai = in[0].impl();
    Tensor out = make_output(OpKind::Scale, in[0].shape(), in, [ai, c](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        for (size_t i = 0; i < o.grad.size(); ++i) da[i] += c * o.grad[i];
    });
    for (int i = 0; i < out.numel(); ++i) out.data_mut()[i] = c * in[0].data()[i];
    return out;
}

Tensor op_reduce(OpKind kind, const std::vector<Tensor>& in) {
    if (in.size() != 1) shape_fail(kind, in, "expects 1 input");
    auto ai = in[0].impl();
    const int n = in[0].numel();
    const double w = (kind == OpKind::Mean) ? 1.0 / n : 1.0;
    Tensor out = make_output(kind, {1}, in, [ai, w](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        const double g = o.grad[0] * w;
        for (size_t i = 0; i < ai->data.size(); ++i) da[i] += g;
    });
    double acc = 0.0;
    for (double v : in[0].data()) acc += v;
    out.data_mut()[0] = acc * w;
    return out;
}

Tensor op_transpose(const std::vector<Tensor>& in) {
    if (in.size() != 1 || in[0].shape().size() != 2) shape_fail(OpKind::Transpose, in, "expects one rank-2 input");
    const int m = in[0].rows(), n = in[0].cols();
    auto ai = in[0].impl();
    Tensor out = make_output(OpKind::Transpose, {n, m}, in, [ai, m, n](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        const double* g = o.grad.data();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c) da[static_cast<size_t>(c) * n + r] += g[static_cast<size_t>(r) * m + c];
    });
    const double* ad = in[0].data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) od[static_cast<size_t>(c) * m + r] = ad[static_cast<size_t>(r) * n + c];
    return out;
}

Tensor op_reshape(const std::vector<Tensor>& in, const std::vector<int>& dims) {
    if (in.size() != 1) shape_fail(OpKind::Reshape, in, "expects 1 input");
    check_positive_shape(dims);
    int n = 1;
    for (int d : dims) n *= d;
    if (n != in[0].numel()) shape_fail(OpKind::Reshape, in, "target " + shape_str(dims) + " has different element count");
    auto ai = in[0].impl();
    Tensor out = make_output(OpKind::Reshape, dims, in, [ai](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        for (size_t i = 0; i < o.grad.size(); ++i) da[i] += o.grad[i];
    });
    std::copy(in[0].data().begin(), in[0].data().end(), out.data_mut().begin());
    return out;
}

Tensor op_concat(const std::vector<Tensor>& in, int axis) {
    if (in.empty()) shape_fail(OpKind::Concat, in, "expects at least 1 input");
    if (axis != 0 && axis != 1) shape_fail(OpKind::Concat, in, "axis must be 0 or 1");
    const int n0 = in[0].cols();
    const int m0 = in[0].rows();
    int total = 0;
    for (const auto& t : in) {
        if (t.shape().size() != 2) shape_fail(OpKind::Concat, in, "expects rank-2 inputs");
        if (axis == 0 && t.cols() != n0) shape_fail(OpKind::Concat, in, "column counts differ");
        if (axis == 1 && t.rows() != m0) shape_fail(OpKind::Concat, in, "row counts differ");
        total += (axis == 0) ? t.rows() : t.cols();
    }
    const int om = (axis == 0) ? total : m0;
    const int on = (axis == 0) ? n0 : total;

    std::vector<std::shared_ptr<TensorImpl>> parts;
    for (const auto& t : in) parts.push_back(t.impl());
    Tensor out = make_output(OpKind::Concat, {om, on}, in, [parts, axis, om, on](TensorImpl& o) {
        const double* g = o.grad.data();
        int offset = 0;
        for (auto& p : parts) {
            const int pm = view_rows(p->shape), pn = view_cols(p->shape);
            if (wants_grad(*p)) {
                double* dp = ensure_grad(*p).data();
                for (int r = 0; r < pm; ++r)
                    for (int c = 0; c < pn; ++c) {
                        const size_t oi = (axis == 0)
                                              ? static_cast<size_t>(offset + r) * on + c
                                              : static_cast<size_t>(r) * on + (offset + c);
                        dp[static_cast<size_t>(r) * pn + c] += g[oi];
                    }
            }
            offset += (axis == 0) ? pm : pn;
        }
    });
    double* od = out.data_mut().data();
    int offset = 0;
    for (const auto& t : in) {
        const int pm = t.rows(), pn = t.cols();
        const double* pd = t.data().data();
        for (int r = 0; r < pm; ++r)
            for (int c = 0; c < pn; ++c) {
                const size_t oi = (axis == 0) ? static_cast<size_t>(offset + r) * on + c
                                              : static_cast<size_t>(r) * on + (offset + c);
                od[oi] = pd[static_cast<size_t>(r) * pn + c];
            }
        offset += (axis == 0) ? pm : pn;
    }
    return out;
}

Tensor op_slice(const std::vector<Tensor>& in, int axis, int start, int stop) {
    if (in.size() != 1 || in[0].shape().size() != 2) shape_fail(OpKind::Slice, in, "expects one rank-2 input");
    if (axis != 0 && axis != 1) shape_fail(OpKind::Slice, in, "axis must be 0 or 1");
    const int m = in[0].rows(), n = in[0].cols();
    const int limit = (axis == 0) ? m : n;
    if (start < 0 || stop > limit || start >= stop)
        shape_fail(OpKind::Slice, in, "range [" + std::to_string(start) + "," + std::to_string(stop) +
                                          ") out of bounds for axis " + std::to_string(axis));
    const int om = (axis == 0) ? stop - start : m;
    const int on = (axis == 0) ? n : stop - start;
    auto ai = in[0].impl();
    Tensor out = make_output(OpKind::Slice, {om, on}, in, [ai, axis, start, om, on, n](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        const double* g = o.grad.data();
        for (int r = 0; r < om; ++r)
            for (int c = 0; c < on; ++c) {
                const size_t si = (axis == 0) ? static_cast<size_t>(start + r) * n + c
                                              : static_cast<size_t>(r) * n + (start + c);
                da[si] += g[static_cast<size_t>(r) * on + c];
            }
    });
    const double* ad = in[0].data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < om; ++r)
        for (int c = 0; c < on; ++c) {
            const size_t si = (axis == 0) ? static_cast<size_t>(start + r) * n + c
                                          : static_cast<size_t>(r) * n + (start + c);
            od[static_cast<size_t>(r) * on + c] = ad[si];
        }
    return out;
}

Tensor op_softmax(const std::vector<Tensor>& in) {
    if (in.size() != 1) shape_fail(OpKind::SoftmaxLastdim, in, "expects 1 input");
    const int m = in[0].rows(), n = in[0].cols();
    auto ai = in[0].impl();
    Tensor out = Tensor::zeros(in[0].shape());
    const double* ad = in[0].data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < m; ++r) {
        const double* x = ad + static_cast<size_t>(r) * n;
        double* y = od + static_cast<size_t>(r) * n;
        double mx = x[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, x[c]);
        double z = 0.0;
        for (int c = 0; c < n; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        for (int c = 0; c < n; ++c) y[c] /= z;
    }
    if (!in[0].requires_grad()) return out;

    // keep a copy of the probabilities for the backward pass
    std::vector<double> probs(od, od + out.numel());
    Tensor result = make_output(OpKind::SoftmaxLastdim, in[0].shape(), in,
                                [ai, probs = std::move(probs), m, n](TensorImpl& o) {
                                    if (!wants_grad(*ai)) return;
                                    double* da = ensure_grad(*ai).data();
                                    const double* g = o.grad.data();
                                    for (int r = 0; r < m; ++r) {
                                        const double* p = probs.data() + static_cast<size_t>(r) * n;
                                        const double* gr = g + static_cast<size_t>(r) * n;
                                        double dot = 0.0;
                                        for (int c = 0; c < n; ++c) dot += p[c] * gr[c];
                                        double* dar = da + static_cast<size_t>(r) * n;
                                        for (int c = 0; c < n; ++c) dar[c] += p[c] * (gr[c] - dot);
                                    }
                                });
    std::copy(out.data().begin(), out.data().end(), result.data_mut().begin());
    return result;
}

Tensor op_layer_norm(const std::vector<Tensor>& in) {
    if (in.size() != 1) shape_fail(OpKind::LayerNorm, in, "expects 1 input");
    const int m = in[0].rows(), n = in[0].cols();
    if (n < 1) shape_fail(OpKind::LayerNorm, in, "needs at least one feature");
    auto ai = in[0].impl();

    std::vector<double> inv_std(m), mu(m);
    Tensor out = make_output(OpKind::LayerNorm, in[0].shape(), in, nullptr);
    const double* ad = in[0].data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < m; ++r) {
        const double* x = ad + static_cast<size_t>(r) * n;
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += x[c];
        const double mean = s / n;
        double v = 0.0;
        for (int c = 0; c < n; ++c) v += (x[c] - mean) * (x[c] - mean);
        v /= n;
        const double is = 1.0 / std::sqrt(v + kNormEps);
        mu[r] = mean;
        inv_std[r] = is;
        double* y = od + static_cast<size_t>(r) * n;
        for (int c = 0; c < n; ++c) y[c] = (x[c] - mean) * is;
    }
    if (out.impl()->node) {
        out.impl()->node->backward_fn = [ai, mu = std::move(mu), inv_std = std::move(inv_std), m,
                                         n](TensorImpl& o) {
            if (!wants_grad(*ai)) return;
            double* da = ensure_grad(*ai).data();
            const double* g = o.grad.data();
            const double* x = ai->data.data();
            for (int r = 0; r < m; ++r) {
                const double* xr = x + static_cast<size_t>(r) * n;
                const double* gr = g + static_cast<size_t>(r) * n;
                double* dar = da + static_cast<size_t>(r) * n;
                const double is = inv_std[r];
                double gsum = 0.0, gxsum = 0.0;
                for (int c = 0; c < n; ++c) {
                    gsum += gr[c];
                    gxsum += gr[c] * (xr[c] - mu[r]);
                }
                const double k1 = gsum / n;
                const double k2 = gxsum * is * is / n;
                for (int c = 0; c < n; ++c) dar[c] += is * (gr[c] - k1 - (xr[c] - mu[r]) * k2);
            }
        };
    }
    return out;
}

Tensor op_unary(OpKind kind, const std::vector<Tensor>& in) {
    if (in.size() != 1) shape_fail(kind, in, "expects 1 input");
    auto ai = in[0].impl();
    Tensor out = make_output(kind, in[0].shape(), in, [ai, kind](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        const double* x = ai->data.data();
        const double* g = o.grad.data();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            if (kind == OpKind::Relu) {
                da[i] += x[i] > 0.0 ? g[i] : 0.0;
            } else {
                const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
                da[i] += g[i] * (cdf + x[i] * pdf);
            }
        }
    });
    const double* x = in[0].data().data();
    double* y = out.data_mut().data();
    for (int i = 0; i < out.numel(); ++i)
        y[i] = (kind == OpKind::Relu) ? std::max(0.0, x[i]) : 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    return out;
}

Tensor op_embedding(const std::vector<Tensor>& in, const std::vector<int>& ids) {
    if (in.size() != 1 || in[0].shape().size() != 2) shape_fail(OpKind::EmbeddingLookup, in, "expects one rank-2 table");
    if (ids.empty()) shape_fail(OpKind::EmbeddingLookup, in, "ids must be non-empty");
    const int v = in[0].rows(), d = in[0].cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ShapeError("embedding_lookup: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
    auto ai = in[0].impl();
    const int len = static_cast<int>(ids.size());
    Tensor out = make_output(OpKind::EmbeddingLookup, {len, d}, in, [ai, ids, d](TensorImpl& o) {
        if (!wants_grad(*ai)) return;
        double* da = ensure_grad(*ai).data();
        const double* g = o.grad.data();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int c = 0; c < d; ++c) da[static_cast<size_t>(ids[i]) * d + c] += g[i * d + c];
    });
    const double* tab = in[0].data().data();
    double* od = out.data_mut().data();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(tab + static_cast<size_t>(ids[i]) * d, tab + static_cast<size_t>(ids[i] + 1) * d, od + i * d);
    return out;
}

Tensor op_l1_loss(const std::vector<Tensor>& in) {
    if (in.size() != 2) shape_fail(OpKind::L1Loss, in, "expects 2 inputs");
    if (in[0].shape() != in[1].shape()) shape_fail(OpKind::L1Loss, in, "shapes must match");
    auto ai = in[0].impl();
    auto bi = in[1].impl();
    const int n = in[0].numel();
    Tensor out = make_output(OpKind::L1Loss, {1}, in, [ai, bi, n](TensorImpl& o) {
        const double g = o.grad[0] / n;
        const double* a = ai->data.data();
        const double* b = bi->data.data();
        double* da = wants_grad(*ai) ? ensure_grad(*ai).data() : nullptr;
        double* db = wants_grad(*bi) ? ensure_grad(*bi).data() : nullptr;
        for (int i = 0; i < n; ++i) {
            const double s = (a[i] > b[i]) ? 1.0 : (a[i] < b[i] ? -1.0 : 0.0);
            if (da) da[i] += g * s;
            if (db) db[i] -= g * s;
        }
    });
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += std::abs(in[0].data()[i] - in[1].data()[i]);
    out.data_mut()[0] = acc / n;
    return out;
}

Tensor op_l2_normalize(const std::vector<Tensor>& in) {
    if (in.size() != 1) shape_fail(OpKind::L2NormalizeLastdim, in, "expects 1 input");
    const int m = in[0].rows(), n = in[0].cols();
    auto ai = in[0].impl();
    std::vector<double> norms(m);
    Tensor out = make_output(OpKind::L2NormalizeLastdim, in[0].shape(), in, nullptr);
    const double* ad = in[0].data().data();
    double* od = out.data_mut().data();
    for (int r = 0; r < m; ++r) {
        const double* x = ad + static_cast<size_t>(r) * n;
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += x[c] * x[c];
        const double nr = std::max(std::sqrt(s), kNormEps);
        norms[r] = nr;
        double* y = od + static_cast<size_t>(r) * n;
        for (int c = 0; c < n; ++c) y[c] = x[c] / nr;
    }
    if (out.impl()->node) {
        out.impl()->node->backward_fn = [ai, norms = std::move(norms), m, n](TensorImpl& o) {
            if (!wants_grad(*ai)) return;
            double* da = ensure_grad(*ai).data();
            const double* g = o.grad.data();
            const double* x = ai->data.data();
            for (int r = 0; r < m; ++r) {
                const double* xr = x + static_cast<size_t>(r) * n;
                const double* gr = g + static_cast<size_t>(r) * n;
                double* dar = da + static_cast<size_t>(r) * n;
                const double nr = norms[r];
                if (nr <= kNormEps) {
                    // guard active: y = x / eps is linear
                    for (int c = 0; c < n; ++c) dar[c] += gr[c] / nr;
                    continue;
                }
                double dot = 0.0;
                for (int c = 0; c < n; ++c) dot += gr[c] * xr[c];
                dot /= nr * nr;
                for (int c = 0; c < n; ++c) dar[c] += (gr[c] - xr[c] * dot) / nr;
            }
        };
    }
    return out;
}

}  // namespace

Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
    for (const auto& t : inputs)
        if (!t.defined()) throw ShapeError(std::string(op_name(kind)) + ": undefined input tensor");
    switch (kind) {
        case OpKind::Matmul: return op_matmul(inputs);
        case OpKind::Add: return op_arith(kind, Arith::Add, inputs);
        case OpKind::Sub: return op_arith(kind, Arith::Sub, inputs);
        case OpKind::MulElem: return op_arith(kind, Arith::Mul, inputs);
        case OpKind::Scale: return op_scale(inputs, attrs.scalar);
        case OpKind::Mean: return op_reduce(kind, inputs);
        case OpKind::Sum: return op_reduce(kind, inputs);
        case OpKind::Transpose: return op_transpose(inputs);
        case OpKind::Reshape: return op_reshape(inputs, attrs.dims);
        case OpKind::Concat: return op_concat(inputs, attrs.axis);
        case OpKind::Slice: return op_slice(inputs, attrs.axis, attrs.start, attrs.stop);
        case OpKind::SoftmaxLastdim: return op_softmax(inputs);
        case OpKind::LayerNorm: return op_layer_norm(inputs);
        case OpKind::Gelu: return op_unary(kind, inputs);
        case OpKind::Relu: return op_unary(kind, inputs);
        case OpKind::EmbeddingLookup: return op_embedding(inputs, attrs.ids);
        case OpKind::L1Loss: return op_l1_loss(inputs);
        case OpKind::L2NormalizeLastdim: return op_l2_normalize(inputs);
    }
    throw ShapeError("unknown op_kind " + std::to_string(static_cast<int>(kind)));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar tensor");
    TensorImpl* root = loss.impl().get();
    if (!root->requires_grad) return;  // constant loss: nothing to do

    // reverse post-order = children before parents
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [t, idx] = stack.back();
        const size_t n_parents = t->node ? t->node->parents.size() : 0;
        if (idx < n_parents) {
            TensorImpl* p = t->node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(t);
            stack.pop_back();
        }
    }

    ensure_grad(*root)[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (t->node && !t->grad.empty()) t->node->backward_fn(*t);
    }
    // free the traversed graph; tensors stay valid, the edges do not
    for (TensorImpl* t : order) t->node.reset();
}

Tensor matmul(const Tensor& a, const Tensor& b) { return apply(OpKind::Matmul, {a, b}); }
Tensor add(const Tensor& a, const Tensor& b) { return apply(OpKind::Add, {a, b}); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply(OpKind::Sub, {a, b}); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply(OpKind::MulElem, {a, b}); }
Tensor scale(const Tensor& a, double c) {
    OpAttrs attrs;
    attrs.scalar = c;
    return apply(OpKind::Scale, {a}, attrs);
}
Tensor mean(const Tensor& a) { return apply(OpKind::Mean, {a}); }
Tensor sum(const Tensor& a) { return apply(OpKind::Sum, {a}); }
Tensor transpose(const Tensor& a) { return apply(OpKind::Transpose, {a}); }
Tensor reshape(const Tensor& a, std::vector<int> dims) {
    OpAttrs attrs;
    attrs.dims = std::move(dims);
    return apply(OpKind::Reshape, {a}, attrs);
}
Tensor concat(const std::vector<Tensor>& parts, int axis) {
    OpAttrs attrs;
    attrs.axis = axis;
    return apply(OpKind::Concat, parts, attrs);
}
Tensor slice(const Tensor& a, int axis, int start, int stop) {
    OpAttrs attrs;
    attrs.axis = axis;
    attrs.start = start;
    attrs.stop = stop;
    return apply(OpKind::Slice, {a}, attrs);
}
Tensor softmax_lastdim(const Tensor& a) { return apply(OpKind::SoftmaxLastdim, {a}); }
Tensor layer_norm(const Tensor& a) { return apply(OpKind::LayerNorm, {a}); }
Tensor gelu(const Tensor& a) { return apply(OpKind::Gelu, {a}); }
Tensor relu(const Tensor& a) { return apply(OpKind::Relu, {a}); }
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    OpAttrs attrs;
    attrs.ids = ids;
    return apply(OpKind::EmbeddingLookup, {table}, attrs);
}
Tensor l1_loss(const Tensor& a, const Tensor& b) { return apply(OpKind::L1Loss, {a, b}); }
Tensor l2_normalize_lastdim(const Tensor& a) { return apply(OpKind::L2NormalizeLastdim, {a}); }

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 1 || b.shape().size() != 1 || a.numel() != b.numel())
        throw ShapeError("cosine_sim: expects two rank-1 tensors of equal length, got " +
                         std::to_string(a.numel()) + " vs " + std::to_string(b.numel()));
    return sum(mul(l2_normalize_lastdim(a), l2_normalize_lastdim(b)));
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    if (loss.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                        : std::vector<double>(p.numel(), 0.0));

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (int i = 0; i < p.numel(); ++i) {
            const double saved = p.data()[i];
            p.data_mut()[i] = saved + eps;
            const double fp = f().value();
            p.data_mut()[i] = saved - eps;
            const double fm = f().value();
            p.data_mut()[i] = saved;
            const double central = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double err = std::abs(a - central) / std::max({std::abs(a), std::abs(central), 1e-8});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace sf
