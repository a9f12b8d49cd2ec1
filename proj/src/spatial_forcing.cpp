#include "sf/spatial_forcing.hpp"

#include <cmath>

namespace sf {

std::atomic<long> g_teacher_feature_calls{0};

Tensor positional_embedding(int n, int d_teacher, double scale) {
    if (d_teacher % 2 != 0) throw ShapeError("positional_embedding: d_teacher must be even");
    Tensor e = Tensor::zeros({n, d_teacher});
    auto d = e.data_mut();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_teacher / 2; ++j) {
            const double rate = std::pow(10000.0, 2.0 * j / d_teacher);
            d[static_cast<size_t>(i) * d_teacher + 2 * j] = scale * std::sin(i / rate);
            d[static_cast<size_t>(i) * d_teacher + 2 * j + 1] = scale * std::cos(i / rate);
        }
    return e;
}

std::vector<std::array<double, 8>> patch_geometry_stats(std::span<const StoredView> views,
                                                        const ModelConfig& cfg) {
    if (static_cast<int>(views.size()) != cfg.n_views)
        throw ModelError("patch_geometry_stats: expected " + std::to_string(cfg.n_views) + " views");
    const int h = cfg.image_h, w = cfg.image_w, ps = cfg.patch_size;
    const int grid = w / ps;
    for (const StoredView& v : views)
        if (v.height != h || v.width != w)
            throw ModelError("patch_geometry_stats: view grid does not match the model config");

    std::vector<std::array<double, 8>> stats(static_cast<size_t>(cfg.n_visual()), {});
    for (int vi = 0; vi < cfg.n_views; ++vi) {
        const StoredView& view = views[static_cast<size_t>(vi)];

        // per-pixel normals from point-map finite differences, oriented upward
        std::vector<double> normals(static_cast<size_t>(h) * w * 3, 0.0);
        std::vector<std::uint8_t> has_normal(static_cast<size_t>(h) * w, 0);
        auto pt = [&view, w](int i, int j) {
            const size_t p = (static_cast<size_t>(i) * w + j) * 3;
            return Vec3{view.pointmap[p], view.pointmap[p + 1], view.pointmap[p + 2]};
        };
        for (int i = 0; i + 1 < h; ++i)
            for (int j = 0; j + 1 < w; ++j) {
                const size_t p = static_cast<size_t>(i) * w + j;
                if (!view.mask[p] || !view.mask[p + 1] || !view.mask[p + w]) continue;
                const Vec3 du = pt(i, j + 1) - pt(i, j);
                const Vec3 dv = pt(i + 1, j) - pt(i, j);
                Vec3 n = du.cross(dv);
                const double len = n.norm();
                if (len < 1e-12) continue;
                n = n * (1.0 / len);
                if (n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0)))) n = n * -1.0;
                normals[p * 3 + 0] = n.x;
                normals[p * 3 + 1] = n.y;
                normals[p * 3 + 2] = n.z;
                has_normal[p] = 1;
            }

        for (int pr = 0; pr < grid; ++pr)
            for (int pc = 0; pc < grid; ++pc) {
                auto& s = stats[static_cast<size_t>(vi * cfg.patches_per_view() + pr * grid + pc)];
                int fg = 0, nn = 0;
                for (int i = pr * ps; i < (pr + 1) * ps; ++i)
                    for (int j = pc * ps; j < (pc + 1) * ps; ++j) {
                        const size_t p = static_cast<size_t>(i) * w + j;
                        if (!view.mask[p]) continue;
                        ++fg;
                        s[0] += view.pointmap[p * 3 + 0];
                        s[1] += view.pointmap[p * 3 + 1];
                        s[2] += view.pointmap[p * 3 + 2];
                        s[3] += view.depth[p];
                        if (has_normal[p]) {
                            ++nn;
                            s[4] += normals[p * 3 + 0];
                            s[5] += normals[p * 3 + 1];
                            s[6] += normals[p * 3 + 2];
                        }
                    }
                if (fg > 0)
                    for (int k = 0; k < 4; ++k) s[static_cast<size_t>(k)] /= fg;
                if (nn > 0)
                    for (int k = 4; k < 7; ++k) s[static_cast<size_t>(k)] /= nn;
                s[7] = static_cast<double>(fg) / (ps * ps);
            }
    }
    return stats;
}

TeacherFeatures teacher_features(std::span<const StoredView> views, const ModelConfig& cfg,
                                 double e_scale) {
    g_teacher_feature_calls.fetch_add(1, std::memory_order_relaxed);
    TeacherFeatures tf;
    tf.raw_stats = patch_geometry_stats(views, cfg);

    const int n = cfg.n_visual();
    const int d = cfg.d_teacher;
    const int bands = d / 16;  // per stat: `bands` sin/cos pairs; 8 stats total
    Tensor targets = Tensor::zeros({n, d});
    auto td = targets.data_mut();
    for (int i = 0; i < n; ++i) {
        double* row = td.data() + static_cast<size_t>(i) * d;
        int k = 0;
        for (int st = 0; st < 8; ++st) {
            const double v = tf.raw_stats[static_cast<size_t>(i)][static_cast<size_t>(st)];
            for (int b = 0; b < bands; ++b) {
                const double arg = std::ldexp(1.0, b) * 3.14159265358979323846 * v;
                row[k++] = std::sin(arg);
                row[k++] = std::cos(arg);
            }
        }
        double norm = 0.0;
        for (int c = 0; c < d; ++c) norm += row[c] * row[c];
        norm = std::sqrt(norm);
        for (int c = 0; c < d; ++c) row[c] /= norm;
    }

    const Tensor e = positional_embedding(n, d, e_scale);
    for (int i = 0; i < n * d; ++i) td[static_cast<size_t>(i)] += e.data()[static_cast<size_t>(i)];
    tf.targets = targets;
    return tf;
}

Projector Projector::init(const ModelConfig& cfg, Rng& rng) {
    Projector p;
    p.bn = BatchNormState::init(cfg.d_model);
    const int hidden = 128;
    p.mlp_w1 = Tensor::randn({cfg.d_model, hidden}, rng, 0.05, true);
    p.mlp_b1 = Tensor::zeros({1, hidden}, true);
    p.mlp_w2 = Tensor::randn({hidden, cfg.d_teacher}, rng, 0.05, true);
    p.mlp_b2 = Tensor::zeros({1, cfg.d_teacher}, true);
    return p;
}

void Projector::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("sf/proj.bn.gamma", bn.gamma);
    fn("sf/proj.bn.beta", bn.beta);
    fn("sf/proj.mlp.w1", mlp_w1);
    fn("sf/proj.mlp.b1", mlp_b1);
    fn("sf/proj.mlp.w2", mlp_w2);
    fn("sf/proj.mlp.b2", mlp_b2);
}

std::vector<Tensor> Projector::all() {
    std::vector<Tensor> out;
    visit([&out](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

std::vector<std::pair<std::string, Tensor>> Projector::named() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&out](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
    return out;
}

Tensor project(const Tensor& visual_taps, Projector& projector, BatchNormMode mode) {
    Tensor normed = batch_norm(visual_taps, projector.bn, mode);
    Tensor hidden = gelu(add(matmul(normed, projector.mlp_w1), projector.mlp_b1));
    return add(matmul(hidden, projector.mlp_w2), projector.mlp_b2);
}

Tensor align_loss(const Tensor& projected, const Tensor& targets) {
    if (projected.rows() != targets.rows() || projected.cols() != targets.cols())
        throw ShapeError("align_loss: projected " + std::to_string(projected.rows()) + "x" +
                         std::to_string(projected.cols()) + " vs targets " + std::to_string(targets.rows()) +
                         "x" + std::to_string(targets.cols()));
    const Tensor cos_sum = sum(mul(l2_normalize_lastdim(projected), l2_normalize_lastdim(targets)));
    return scale(cos_sum, -1.0 / projected.rows());
}

Tensor total_loss(const Tensor& l_action, const Tensor& l_align, const LossWeights& weights) {
    if (!std::isfinite(l_action.value()) || !std::isfinite(l_align.value()))
        throw ModelError("total_loss: non-finite loss input");
    if (!(weights.alpha >= 0.0) || !std::isfinite(weights.alpha))
        throw ModelError("total_loss: alpha must be finite and non-negative");
    return add(l_action, scale(l_align, weights.alpha));
}

}  // namespace sf
