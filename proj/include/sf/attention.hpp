#pragma once

#include "sf/tensor.hpp"

namespace sf {

struct AttentionWeights {
    Tensor wq, wk, wv, wo;  // each [d, d]
};

// Multi-head scaled dot-product self-attention over x [T, d] with a strict
// causal mask: the output at position t depends only on inputs at positions <= t.
// Composed from primitive ops, so it is differentiable end to end.
Tensor causal_self_attention(const Tensor& x, const AttentionWeights& w, int n_heads);

}  // namespace sf
