#pragma once

#include <array>
#include <atomic>
#include <span>

#include "sf/batch_norm.hpp"
#include "sf/model.hpp"

namespace sf {

// Per-visual-token geometric target vectors: Fourier-embedded per-patch
// point/depth/normal statistics at unit norm, plus a fixed sinusoidal
// positional embedding. Targets carry no gradient.
struct TeacherFeatures {
    Tensor targets;  // [N, d_teacher], requires_grad = false
    // raw per-patch stats: mean world point (3), mean camera depth (1),
    // mean surface normal (3), foreground fraction (1)
    std::vector<std::array<double, 8>> raw_stats;
};

// Fixed (non-learned) sinusoidal table:
//   E[i, 2j]   = scale * sin(i / 10000^(2j/d))
//   E[i, 2j+1] = scale * cos(i / 10000^(2j/d))
Tensor positional_embedding(int n, int d_teacher, double scale = 0.1);

// Count of teacher_features invocations, for the baseline-purity check.
extern std::atomic<long> g_teacher_feature_calls;

// Per-patch raw geometry stats over foreground pixels, in the exact patch
// index space of patchify. All-background patches are zeros with fraction 0.
// Surface normals are estimated from point-map finite differences.
std::vector<std::array<double, 8>> patch_geometry_stats(std::span<const StoredView> views,
                                                        const ModelConfig& cfg);

TeacherFeatures teacher_features(std::span<const StoredView> views, const ModelConfig& cfg,
                                 double e_scale = 0.1);

// Batch normalization followed by a two-layer MLP, mapping backbone width to
// teacher width. Trained alongside the policy, excluded from inference.
struct Projector {
    BatchNormState bn;                  // over d_model features
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // d_model -> 128 -> d_teacher

    static Projector init(const ModelConfig& cfg, Rng& rng);
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    std::vector<Tensor> all();
    std::vector<std::pair<std::string, Tensor>> named();
};

// The batch dimension pools all visual tokens of all samples in the minibatch.
Tensor project(const Tensor& visual_taps, Projector& projector, BatchNormMode mode);

// -(1/N) sum_i cos(projected_i, targets_i); gradient reaches `projected` only.
Tensor align_loss(const Tensor& projected, const Tensor& targets);

struct LossWeights {
    double alpha = 0.5;
};

// L_action + alpha * L_align.
Tensor total_loss(const Tensor& l_action, const Tensor& l_align, const LossWeights& weights);

}  // namespace sf
