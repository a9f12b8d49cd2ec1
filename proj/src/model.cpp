#include "sf/model.hpp"

#include <cmath>

namespace sf {

void ModelConfig::validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1) throw ModelError("model dims must be positive");
    if (d_model % n_heads != 0) throw ModelError("d_model must be divisible by n_heads");
    if (image_h % patch_size != 0 || image_w % patch_size != 0)
        throw ModelError("image dims must be divisible by patch_size");
    if (n_views < 1 || n_views > 2) throw ModelError("n_views must be 1 or 2");
    if (vocab < 8) throw ModelError("vocab too small for the instruction encoding");
    if (m_tokens < 1 || k_queries < 1 || action_dim < 1) throw ModelError("token counts must be positive");
    if (horizon < 1 || horizon > k_queries) throw ModelError("horizon must be in [1, k_queries]");
    if (aligned_layer < 1 || aligned_layer > n_layers)
        throw ModelError("aligned_layer must be in [1, n_layers]");
    if (d_teacher < 16 || d_teacher % 16 != 0)
        throw ModelError("d_teacher must be a positive multiple of 16");
}

namespace {
constexpr double kInitStd = 0.02;
}

VLAParams VLAParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    VLAParams p;
    p.config = cfg;
    const int d = cfg.d_model;
    auto w = [&rng](std::vector<int> shape) { return Tensor::randn(std::move(shape), rng, kInitStd, true); };
    auto zeros = [](std::vector<int> shape) { return Tensor::zeros(std::move(shape), true); };
    auto ones = [](std::vector<int> shape) { return Tensor::full(std::move(shape), 1.0, true); };

    p.patch_proj_w = w({cfg.patch_pixels(), d});
    p.patch_proj_b = zeros({1, d});
    p.lang_table = w({cfg.vocab, d});
    p.pos_table = w({cfg.seq_len(), d});
    p.action_queries = w({cfg.k_queries, d});
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& layer : p.layers) {
        layer.ln1_gain = ones({1, d});
        layer.ln1_bias = zeros({1, d});
        layer.attn = {w({d, d}), w({d, d}), w({d, d}), w({d, d})};
        layer.ln2_gain = ones({1, d});
        layer.ln2_bias = zeros({1, d});
        layer.mlp_w1 = w({d, cfg.mlp_hidden()});
        layer.mlp_b1 = zeros({1, cfg.mlp_hidden()});
        layer.mlp_w2 = w({cfg.mlp_hidden(), d});
        layer.mlp_b2 = zeros({1, d});
    }
    p.final_ln_gain = ones({1, d});
    p.final_ln_bias = zeros({1, d});
    p.head_w1 = w({d, 64});
    p.head_b1 = zeros({1, 64});
    p.head_w2 = w({64, cfg.action_dim});
    p.head_b2 = zeros({1, cfg.action_dim});
    return p;
}

void VLAParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("patch_proj.w", patch_proj_w);
    fn("patch_proj.b", patch_proj_b);
    fn("lang_table", lang_table);
    fn("pos_table", pos_table);
    fn("action_queries", action_queries);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        fn(p + "ln1.gain", layers[l].ln1_gain);
        fn(p + "ln1.bias", layers[l].ln1_bias);
        fn(p + "attn.wq", layers[l].attn.wq);
        fn(p + "attn.wk", layers[l].attn.wk);
        fn(p + "attn.wv", layers[l].attn.wv);
        fn(p + "attn.wo", layers[l].attn.wo);
        fn(p + "ln2.gain", layers[l].ln2_gain);
        fn(p + "ln2.bias", layers[l].ln2_bias);
        fn(p + "mlp.w1", layers[l].mlp_w1);
        fn(p + "mlp.b1", layers[l].mlp_b1);
        fn(p + "mlp.w2", layers[l].mlp_w2);
        fn(p + "mlp.b2", layers[l].mlp_b2);
    }
    fn("final_ln.gain", final_ln_gain);
    fn("final_ln.bias", final_ln_bias);
    fn("head.w1", head_w1);
    fn("head.b1", head_b1);
    fn("head.w2", head_w2);
    fn("head.b2", head_b2);
}

std::vector<std::pair<std::string, Tensor>> VLAParams::named() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&out](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
    return out;
}

std::vector<Tensor> VLAParams::all() {
    std::vector<Tensor> out;
    visit([&out](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

VLAParams VLAParams::detached() const {
    VLAParams copy = *this;  // shallow; every handle is rebound below
    copy.visit([](const std::string&, Tensor& t) {
        t = Tensor::from_data(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), false);
    });
    return copy;
}

Tensor patchify(std::span<const StoredView> views, const ModelConfig& cfg) {
    if (static_cast<int>(views.size()) != cfg.n_views)
        throw ModelError("patchify: expected " + std::to_string(cfg.n_views) + " views, got " +
                         std::to_string(views.size()));
    for (const StoredView& v : views)
        if (v.height != cfg.image_h || v.width != cfg.image_w ||
            v.image.size() != static_cast<size_t>(cfg.image_h) * cfg.image_w * cfg.image_c)
            throw ModelError("patchify: view dimensions do not match the model config");

    const int grid = cfg.image_w / cfg.patch_size;
    const int per_view = cfg.patches_per_view();
    Tensor out = Tensor::zeros({cfg.n_visual(), cfg.patch_pixels()});
    auto od = out.data_mut();
    for (int v = 0; v < cfg.n_views; ++v) {
        const auto& img = views[static_cast<size_t>(v)].image;
        for (int p = 0; p < per_view; ++p) {
            const int pr = p / grid, pc = p % grid;
            double* row = od.data() + static_cast<size_t>(v * per_view + p) * cfg.patch_pixels();
            int k = 0;
            for (int i = 0; i < cfg.patch_size; ++i)
                for (int j = 0; j < cfg.patch_size; ++j) {
                    const size_t px =
                        (static_cast<size_t>(pr * cfg.patch_size + i) * cfg.image_w + (pc * cfg.patch_size + j)) * 3;
                    for (int c = 0; c < 3; ++c) row[k++] = img[px + c];
                }
        }
    }
    return out;
}

TokenSequence assemble(const Tensor& patches, std::span<const std::uint16_t> instruction_ids,
                       const VLAParams& params) {
    const ModelConfig& cfg = params.config;
    if (static_cast<int>(instruction_ids.size()) != cfg.m_tokens)
        throw ModelError("assemble: expected " + std::to_string(cfg.m_tokens) + " instruction ids, got " +
                         std::to_string(instruction_ids.size()));
    std::vector<int> ids;
    ids.reserve(instruction_ids.size());
    for (std::uint16_t id : instruction_ids) {
        if (id >= cfg.vocab)
            throw ModelError("assemble: instruction id " + std::to_string(id) + " >= vocab " +
                             std::to_string(cfg.vocab));
        ids.push_back(static_cast<int>(id));
    }

    Tensor visual = add(matmul(patches, params.patch_proj_w), params.patch_proj_b);
    Tensor language = embedding_lookup(params.lang_table, ids);
    Tensor seq = concat({visual, language, params.action_queries}, 0);

    TokenSequence tokens;
    tokens.embeddings = add(seq, params.pos_table);
    tokens.segments.assign(static_cast<size_t>(cfg.seq_len()), Segment::Vision);
    for (int i = 0; i < cfg.m_tokens; ++i)
        tokens.segments[static_cast<size_t>(cfg.n_visual() + i)] = Segment::Language;
    for (int i = 0; i < cfg.k_queries; ++i)
        tokens.segments[static_cast<size_t>(cfg.n_visual() + cfg.m_tokens + i)] = Segment::Action;
    return tokens;
}

namespace {

Tensor affine_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return add(mul(layer_norm(x), gain), bias);
}

void check_finite(const Tensor& t, int layer_index) {
    for (double v : t.data())
        if (!std::isfinite(v))
            throw ModelError("forward: non-finite activation after layer " + std::to_string(layer_index + 1));
}

}  // namespace

ForwardResult forward(const VLAParams& params, const TokenSequence& tokens) {
    const ModelConfig& cfg = params.config;
    if (!tokens.embeddings.defined() || tokens.embeddings.rows() != cfg.seq_len() ||
        tokens.embeddings.cols() != cfg.d_model)
        throw ModelError("forward: token sequence does not match the model config");

    ForwardResult result;
    Tensor h = tokens.embeddings;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& layer = params.layers[static_cast<size_t>(l)];
        Tensor attn_in = affine_layer_norm(h, layer.ln1_gain, layer.ln1_bias);
        h = add(h, causal_self_attention(attn_in, layer.attn, cfg.n_heads));
        Tensor mlp_in = affine_layer_norm(h, layer.ln2_gain, layer.ln2_bias);
        Tensor hidden = gelu(add(matmul(mlp_in, layer.mlp_w1), layer.mlp_b1));
        h = add(h, add(matmul(hidden, layer.mlp_w2), layer.mlp_b2));
        check_finite(h, l);
        result.taps.push_back(h);
    }
    Tensor final_h = affine_layer_norm(h, params.final_ln_gain, params.final_ln_bias);
    Tensor queries = slice(final_h, 0, cfg.n_visual() + cfg.m_tokens, cfg.seq_len());
    Tensor hidden = gelu(add(matmul(queries, params.head_w1), params.head_b1));
    result.actions_pred = add(matmul(hidden, params.head_w2), params.head_b2);
    return result;
}

Tensor action_loss(const Tensor& actions_pred, const Tensor& actions_gt) {
    return l1_loss(actions_pred, actions_gt);
}

Action predict_action(const VLAParams& params, const std::array<StoredView, 2>& views,
                      const std::vector<std::uint16_t>& instruction_ids) {
    const Tensor patches = patchify(std::span<const StoredView>(views.data(), views.size()), params.config);
    const TokenSequence tokens = assemble(patches, instruction_ids, params);
    const ForwardResult out = forward(params, tokens);
    return {out.actions_pred.at(0, 0), out.actions_pred.at(0, 1), out.actions_pred.at(0, 2),
            out.actions_pred.at(0, 3)};
}

}  // namespace sf
