#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sf/attention.hpp"
#include "sf/episode.hpp"
#include "sf/tensor.hpp"

namespace sf {

struct ModelConfig {
    int d_model = 64;
    int n_layers = 6;
    int n_heads = 4;
    int patch_size = 8;
    int image_h = 32, image_w = 32, image_c = 3;
    int n_views = 2;
    int vocab = 16;
    int m_tokens = 4;   // language tokens
    int k_queries = 4;  // action-query tokens
    int action_dim = 4;
    int horizon = 4;  // each query predicts one of the next `horizon` actions
    int aligned_layer = 4;
    int d_teacher = 64;

    int patch_pixels() const { return patch_size * patch_size * image_c; }
    int patches_per_view() const { return (image_h / patch_size) * (image_w / patch_size); }
    int n_visual() const { return n_views * patches_per_view(); }
    int seq_len() const { return n_visual() + m_tokens + k_queries; }
    int mlp_hidden() const { return 2 * d_model; }

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class Segment : std::uint8_t { Vision, Language, Action };

struct TokenSequence {
    Tensor embeddings;  // [seq_len, d_model]
    std::vector<Segment> segments;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    AttentionWeights attn;
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct VLAParams {
    ModelConfig config;
    Tensor patch_proj_w, patch_proj_b;  // [patch_pixels, d], [1, d]
    Tensor lang_table;                  // [vocab, d]
    Tensor pos_table;                   // [seq_len, d]
    Tensor action_queries;              // [K, d]
    std::vector<LayerParams> layers;
    Tensor final_ln_gain, final_ln_bias;
    Tensor head_w1, head_b1, head_w2, head_b2;  // action expert G: d -> 64 -> action_dim

    static VLAParams init(const ModelConfig& cfg, Rng& rng);

    // Visits every parameter field in a fixed order.
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    std::vector<Tensor> all();
    std::vector<std::pair<std::string, Tensor>> named();
    // Deep copy with requires_grad off everywhere; graph-free forwards.
    VLAParams detached() const;
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Row-major 8x8x3 patches, view-major then raster order, pixel channels
// interleaved. The patch grid is the shared index space with the teacher.
Tensor patchify(std::span<const StoredView> views, const ModelConfig& cfg);

// Embeds patches, looks up instruction ids, appends the learned action queries
// and adds the learned position table. Sequence order is [V x N, L x M, A x K].
TokenSequence assemble(const Tensor& patches, std::span<const std::uint16_t> instruction_ids,
                       const VLAParams& params);

struct ForwardResult {
    Tensor actions_pred;       // [K, action_dim]
    std::vector<Tensor> taps;  // residual stream after each block, [seq_len, d]
};

ForwardResult forward(const VLAParams& params, const TokenSequence& tokens);

// Mean absolute error over all K x action_dim entries (Eq-style L1 objective).
Tensor action_loss(const Tensor& actions_pred, const Tensor& actions_gt);

// First action-query prediction; pure function of the backbone parameters and
// inputs, never touches alignment machinery.
Action predict_action(const VLAParams& params, const std::array<StoredView, 2>& views,
                      const std::vector<std::uint16_t>& instruction_ids);

}  // namespace sf
