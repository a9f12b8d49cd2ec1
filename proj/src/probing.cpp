#include "sf/probing.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "sf/adam.hpp"

namespace sf {

ProbeHead ProbeHead::init(int d_model, Rng& rng) {
    ProbeHead p;
    p.w1 = Tensor::randn({d_model, 64}, rng, 0.1, true);
    p.b1 = Tensor::zeros({1, 64}, true);
    p.w2 = Tensor::randn({64, 1}, rng, 0.1, true);
    p.b2 = Tensor::zeros({1, 1}, true);
    return p;
}

std::vector<Tensor> ProbeHead::all() { return {w1, b1, w2, b2}; }

Tensor ProbeHead::apply(const Tensor& x) const {
    return add(matmul(gelu(add(matmul(x, w1), b1)), w2), b2);
}

namespace {

struct TapRows {
    std::vector<double> taps;     // n * d_model
    std::vector<double> targets;  // n * d_teacher (only when wanted)
    std::vector<std::array<double, 8>> stats;
    int n = 0;
};

// Runs the frozen model over a deterministic stride of timesteps and gathers
// per-visual-token taps plus patch geometry.
TapRows collect_rows(const VLAParams& frozen, const Dataset& data, int layer, int max_steps,
                     bool want_targets, double e_scale) {
    const ModelConfig& cfg = frozen.config;
    if (layer < 1 || layer > cfg.n_layers)
        throw ProbingError("layer " + std::to_string(layer) + " out of range [1," +
                           std::to_string(cfg.n_layers) + "]");
    std::vector<std::pair<int, int>> all_steps;
    for (size_t e = 0; e < data.episodes.size(); ++e)
        for (size_t s = 0; s < data.episodes[e].steps.size(); ++s)
            all_steps.emplace_back(static_cast<int>(e), static_cast<int>(s));
    if (all_steps.empty()) throw ProbingError("dataset has no steps");

    std::vector<std::pair<int, int>> chosen;
    if (static_cast<int>(all_steps.size()) <= max_steps) {
        chosen = all_steps;
    } else {
        chosen.reserve(static_cast<size_t>(max_steps));
        for (int j = 0; j < max_steps; ++j)
            chosen.push_back(all_steps[static_cast<size_t>(j) * all_steps.size() / max_steps]);
    }

    const int n_vis = cfg.n_visual();
    const int d = cfg.d_model;
    TapRows rows;
    for (auto [e, s] : chosen) {
        const EpisodeStep& step = data.episodes[static_cast<size_t>(e)].steps[static_cast<size_t>(s)];
        const Tensor patches = patchify({step.views.data(), step.views.size()}, cfg);
        const TokenSequence tokens =
            assemble(patches, data.episodes[static_cast<size_t>(e)].instruction_ids, frozen);
        const ForwardResult out = forward(frozen, tokens);
        const Tensor& tap = out.taps[static_cast<size_t>(layer - 1)];

        auto stats = patch_geometry_stats({step.views.data(), step.views.size()}, cfg);
        std::optional<TeacherFeatures> teacher;
        if (want_targets) teacher = teacher_features({step.views.data(), step.views.size()}, cfg, e_scale);
        for (int i = 0; i < n_vis; ++i) {
            rows.taps.insert(rows.taps.end(), tap.data().begin() + static_cast<size_t>(i) * d,
                             tap.data().begin() + static_cast<size_t>(i + 1) * d);
            if (want_targets) {
                const auto& t = teacher->targets;
                rows.targets.insert(rows.targets.end(),
                                    t.data().begin() + static_cast<size_t>(i) * cfg.d_teacher,
                                    t.data().begin() + static_cast<size_t>(i + 1) * cfg.d_teacher);
            }
            rows.stats.push_back(stats[static_cast<size_t>(i)]);
            ++rows.n;
        }
    }
    return rows;
}

}  // namespace

ProbePairs collect_probe_pairs(const VLAParams& frozen, const Dataset& data, int layer, int max_steps) {
    const VLAParams params = frozen.patch_proj_w.requires_grad() ? frozen.detached() : frozen;
    TapRows rows = collect_rows(params, data, layer, max_steps, false, 0.0);
    const int d = params.config.d_model;
    ProbePairs pairs;
    std::vector<double> inputs;
    for (int i = 0; i < rows.n; ++i) {
        if (rows.stats[static_cast<size_t>(i)][7] <= 0.0) continue;  // background-only patch
        inputs.insert(inputs.end(), rows.taps.begin() + static_cast<size_t>(i) * d,
                      rows.taps.begin() + static_cast<size_t>(i + 1) * d);
        pairs.labels.push_back(rows.stats[static_cast<size_t>(i)][3]);
    }
    if (pairs.labels.empty()) throw ProbingError("dataset contains no foreground patches");
    pairs.inputs = Tensor::from_data({static_cast<int>(pairs.labels.size()), d}, std::move(inputs));
    return pairs;
}

ProbeHead train_probe_core(const ProbePairs& pairs, int steps, std::uint64_t seed, double lr) {
    Rng init_rng(derive_seed("probe-init", seed));
    ProbeHead probe = ProbeHead::init(pairs.inputs.cols(), init_rng);
    std::vector<Tensor> params = probe.all();
    AdamState opt;
    opt.hyper.lr = lr;
    Rng batch_rng(derive_seed("probe-batches", seed));
    const int n = pairs.inputs.rows();
    const int d = pairs.inputs.cols();
    const int batch = std::min(64, n);
    for (int it = 0; it < steps; ++it) {
        std::vector<double> xb(static_cast<size_t>(batch) * d);
        std::vector<double> yb(static_cast<size_t>(batch));
        for (int b = 0; b < batch; ++b) {
            const auto row = static_cast<size_t>(batch_rng.uniform_index(static_cast<std::uint64_t>(n)));
            std::copy(pairs.inputs.data().begin() + row * d, pairs.inputs.data().begin() + (row + 1) * d,
                      xb.begin() + static_cast<size_t>(b) * d);
            yb[static_cast<size_t>(b)] = pairs.labels[row];
        }
        const Tensor x = Tensor::from_data({batch, d}, std::move(xb));
        const Tensor y = Tensor::from_data({batch, 1}, std::move(yb));
        const Tensor diff = sub(probe.apply(x), y);
        backward(mean(mul(diff, diff)));
        adam_step(params, opt);
    }
    return probe;
}

double probe_rmse_core(const ProbeHead& probe, const ProbePairs& pairs) {
    const Tensor pred = probe.apply(pairs.inputs);
    double se = 0.0;
    for (size_t i = 0; i < pairs.labels.size(); ++i) {
        const double d = pred.at(static_cast<int>(i), 0) - pairs.labels[i];
        se += d * d;
    }
    return std::sqrt(se / static_cast<double>(pairs.labels.size()));
}

ProbeHead train_probe(const VLAParams& frozen, const Dataset& train_data, int layer, int steps,
                      std::uint64_t seed, double lr) {
    return train_probe_core(collect_probe_pairs(frozen, train_data, layer), steps, seed, lr);
}

double probe_rmse(const ProbeHead& probe, const VLAParams& frozen, const Dataset& eval_data, int layer) {
    return probe_rmse_core(probe, collect_probe_pairs(frozen, eval_data, layer, 256));
}

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.rows() != y.rows()) throw ProbingError("linear_cka: row counts differ");
    using Mat = Eigen::MatrixXd;
    const int n = x.rows();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
        x.data().data(), n, x.cols());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
        y.data().data(), n, y.cols());
    Mat xc = xm.rowwise() - xm.colwise().mean();
    Mat yc = ym.rowwise() - ym.colwise().mean();
    const double num = (xc.transpose() * yc).squaredNorm();
    const double den = (xc.transpose() * xc).norm() * (yc.transpose() * yc).norm();
    return den > 0.0 ? num / den : 0.0;
}

DiagnosticsReport alignment_diagnostics(const VLAParams& frozen, Projector* projector,
                                        const Dataset& data, int layer, int probe_steps,
                                        double probe_lr, std::uint64_t seed, double e_scale) {
    const size_t n_eps = data.episodes.size();
    const size_t split = n_eps - std::max<size_t>(1, n_eps / 5);
    if (n_eps < 2) throw ProbingError("alignment_diagnostics needs at least 2 episodes");
    Dataset train_split{data.difficulty, data.height, data.width, data.n_views, {}};
    Dataset eval_split = train_split;
    train_split.episodes.assign(data.episodes.begin(), data.episodes.begin() + static_cast<long>(split));
    eval_split.episodes.assign(data.episodes.begin() + static_cast<long>(split), data.episodes.end());

    const VLAParams params = frozen.patch_proj_w.requires_grad() ? frozen.detached() : frozen;
    TapRows eval_rows = collect_rows(params, eval_split, layer, 256, true, e_scale);
    if (eval_rows.n < 100)
        throw ProbingError("alignment_diagnostics needs >= 100 visual-token samples, got " +
                           std::to_string(eval_rows.n));

    DiagnosticsReport report;
    const ProbeHead probe =
        train_probe_core(collect_probe_pairs(params, train_split, layer), probe_steps, seed, probe_lr);
    report.probe_rmse = probe_rmse(probe, params, eval_split, layer);

    const int d = params.config.d_model;
    const int dt = params.config.d_teacher;
    const Tensor taps = Tensor::from_data({eval_rows.n, d}, std::move(eval_rows.taps));
    const Tensor targets = Tensor::from_data({eval_rows.n, dt}, std::move(eval_rows.targets));
    report.linear_cka = linear_cka(taps, targets);

    if (projector) {
        const Tensor projected = project(taps, *projector, BatchNormMode::Frozen);
        double cos_sum = 0.0;
        std::vector<double> pc(static_cast<size_t>(dt), 0.0), tc(static_cast<size_t>(dt), 0.0);
        for (int i = 0; i < eval_rows.n; ++i) {
            double pp = 0.0, tt = 0.0, pt = 0.0;
            for (int c = 0; c < dt; ++c) {
                const double pv = projected.at(i, c), tv = targets.at(i, c);
                pp += pv * pv;
                tt += tv * tv;
                pt += pv * tv;
                pc[static_cast<size_t>(c)] += pv;
                tc[static_cast<size_t>(c)] += tv;
            }
            cos_sum += pt / (std::max(std::sqrt(pp), kNormEps) * std::max(std::sqrt(tt), kNormEps));
        }
        report.mean_cosine = cos_sum / eval_rows.n;
        double dist = 0.0;
        for (int c = 0; c < dt; ++c) {
            const double diff = (pc[static_cast<size_t>(c)] - tc[static_cast<size_t>(c)]) / eval_rows.n;
            dist += diff * diff;
        }
        report.centroid_distance = std::sqrt(dist);
    }
    return report;
}

}  // namespace sf
