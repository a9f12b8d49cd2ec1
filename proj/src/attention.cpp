#include "sf/attention.hpp"

#include <cmath>

namespace sf {

namespace {

// Additive mask: 0 on and below the diagonal, -1e9 above. exp(-1e9 + logit)
// underflows to exactly 0, so masked positions carry zero weight and zero
// gradient, and causality holds bitwise.
Tensor causal_mask(int t) {
    Tensor m = Tensor::zeros({t, t});
    auto d = m.data_mut();
    for (int r = 0; r < t; ++r)
        for (int c = r + 1; c < t; ++c) d[static_cast<size_t>(r) * t + c] = -1e9;
    return m;
}

}  // namespace

Tensor causal_self_attention(const Tensor& x, const AttentionWeights& w, int n_heads) {
    if (x.shape().size() != 2) throw ShapeError("causal_self_attention: x must be rank-2 [T,d]");
    const int t = x.rows(), d = x.cols();
    if (n_heads < 1 || d % n_heads != 0)
        throw ShapeError("causal_self_attention: d=" + std::to_string(d) + " not divisible by n_heads=" +
                         std::to_string(n_heads));
    const int dh = d / n_heads;

    Tensor q = matmul(x, w.wq);
    Tensor k = matmul(x, w.wk);
    Tensor v = matmul(x, w.wv);
    Tensor mask = causal_mask(t);

    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
        Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
        Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor weights = softmax_lastdim(add(scores, mask));
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor merged = (n_heads == 1) ? head_outs[0] : concat(head_outs, 1);
    return matmul(merged, w.wo);
}

}  // namespace sf
