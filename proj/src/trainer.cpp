#include "sf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sf/adam.hpp"
#include "sf/checkpoint.hpp"
#include "sf/spatial_forcing.hpp"

namespace sf {

namespace {

constexpr std::uint64_t kEvalSeedOffset = 1000000;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_g6(*v) : ""; }

}  // namespace

std::string metrics_csv_text(std::span<const MetricsRow> rows) {
    std::string out = "run_id,iteration,l_action,l_align,total_loss,eval_success_rate,probe_rmse\n";
    for (const MetricsRow& r : rows) {
        out += r.run_id + ',' + std::to_string(r.iteration) + ',' + format_g6(r.l_action) + ',' +
               opt_cell(r.l_align) + ',' + format_g6(r.total_loss) + ',' + format_g6(r.eval_success_rate) +
               ',' + opt_cell(r.probe_rmse) + '\n';
    }
    return out;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows) {
    write_text_file(path, metrics_csv_text(rows));
}

void write_timings_csv(const std::string& path, std::span<const MetricsRow> rows) {
    std::string out = "run_id,iteration,wall_ms\n";
    for (const MetricsRow& r : rows)
        out += r.run_id + ',' + std::to_string(r.iteration) + ',' + std::to_string(r.wall_ms) + '\n';
    write_text_file(path, out);
}

std::string run_id_for(const ExperimentConfig& cfg) {
    return "a" + format_double(cfg.alpha) + "_l" + std::to_string(cfg.model.aligned_layer) + "_f" +
           format_double(cfg.data_fraction) + "_s" + std::to_string(cfg.seed);
}

Dataset generate_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    ds.difficulty = cfg.difficulty;
    ds.height = cfg.model.image_h;
    ds.width = cfg.model.image_w;
    ds.n_views = 2;
    ds.episodes.reserve(static_cast<size_t>(cfg.n_train_episodes));
    for (int i = 0; i < cfg.n_train_episodes; ++i)
        ds.episodes.push_back(gen_episode(cfg.seed + static_cast<std::uint64_t>(i), cfg.difficulty));
    return ds;
}

std::vector<int> fraction_indices(int n, double fraction) {
    const int m = std::max(1, static_cast<int>(std::lround(fraction * n)));
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) idx.push_back(static_cast<int>(static_cast<long>(j) * n / m));
    return idx;
}

double evaluate_success(const VLAParams& frozen, Difficulty difficulty, int trials,
                        std::uint64_t seed_base) {
    const Policy policy = [&frozen](const std::array<StoredView, 2>& views,
                                    const std::vector<std::uint16_t>& instruction) {
        return predict_action(frozen, views, instruction);
    };
    int successes = 0;
    for (int k = 0; k < trials; ++k) {
        const SceneSpec scene = gen_scene(seed_base + kEvalSeedOffset + static_cast<std::uint64_t>(k), difficulty);
        const auto instruction = encode_instruction(scene.target().color_id);
        if (rollout(scene, difficulty, instruction, policy).success) ++successes;
    }
    return static_cast<double>(successes) / trials;
}

TrainResult train_model(const ExperimentConfig& cfg, const Dataset& data, const std::string& out_dir) {
    cfg.validate();
    const ModelConfig& mc = cfg.model;
    if (data.height != mc.image_h || data.width != mc.image_w || data.n_views != 2)
        throw std::runtime_error("train: dataset dimensions do not match the model config");
    if (data.difficulty != cfg.difficulty)
        throw std::runtime_error("train: dataset difficulty does not match the config");
    if (data.episodes.empty()) throw std::runtime_error("train: dataset is empty");

    std::filesystem::create_directories(out_dir);
    const std::string run_id = run_id_for(cfg);
    const auto t_start = std::chrono::steady_clock::now();
    auto wall_ms = [&t_start] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                     t_start)
            .count();
    };

    // timestep pool over the data_fraction subsample
    std::vector<std::pair<int, int>> pool;
    for (int e : fraction_indices(static_cast<int>(data.episodes.size()), cfg.data_fraction))
        for (size_t s = 0; s < data.episodes[static_cast<size_t>(e)].steps.size(); ++s)
            pool.emplace_back(e, static_cast<int>(s));
    if (pool.empty()) throw std::runtime_error("train: no timesteps in the sampled subset");

    Rng init_rng(derive_seed("init-backbone", cfg.seed));
    VLAParams params = VLAParams::init(mc, init_rng);
    const bool use_sf = cfg.alpha > 0.0;
    std::optional<Projector> projector;
    if (use_sf) {
        Rng proj_rng(derive_seed("init-projector", cfg.seed));
        projector = Projector::init(mc, proj_rng);
    }
    std::vector<Tensor> opt_params = params.all();
    if (projector)
        for (Tensor& t : projector->all()) opt_params.push_back(t);
    AdamState opt;
    opt.hyper.lr = cfg.lr;

    Rng batch_rng(derive_seed("batches", cfg.seed));
    const LossWeights weights{cfg.alpha};
    TrainResult result;
    double win_action = 0.0, win_align = 0.0, win_total = 0.0;
    int win_count = 0;

    for (long it = 1; it <= cfg.iterations; ++it) {
        std::vector<const EpisodeStep*> batch_steps;
        std::vector<const Episode*> batch_eps;
        std::vector<int> batch_s;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto [e, s] = pool[batch_rng.uniform_index(pool.size())];
            batch_eps.push_back(&data.episodes[static_cast<size_t>(e)]);
            batch_steps.push_back(&data.episodes[static_cast<size_t>(e)].steps[static_cast<size_t>(s)]);
            batch_s.push_back(s);
        }

        Tensor action_sum;
        std::vector<Tensor> tap_slices, target_parts;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Episode& ep = *batch_eps[static_cast<size_t>(b)];
            const EpisodeStep& step = *batch_steps[static_cast<size_t>(b)];
            const Tensor patches = patchify({step.views.data(), step.views.size()}, mc);
            const TokenSequence tokens = assemble(patches, ep.instruction_ids, params);
            const ForwardResult out = forward(params, tokens);

            // ground-truth chunk: query q targets the expert action at step s+q,
            // clamped to the horizon and the terminal step
            Tensor gt = Tensor::zeros({mc.k_queries, mc.action_dim});
            const int s = batch_s[static_cast<size_t>(b)];
            const int last = static_cast<int>(ep.steps.size()) - 1;
            for (int q = 0; q < mc.k_queries; ++q) {
                const int src = std::min(s + std::min(q, mc.horizon - 1), last);
                const Action& a = ep.steps[static_cast<size_t>(src)].action;
                for (int c = 0; c < mc.action_dim; ++c)
                    gt.data_mut()[static_cast<size_t>(q) * mc.action_dim + c] = a[static_cast<size_t>(c)];
            }
            const Tensor l_act = action_loss(out.actions_pred, gt);
            action_sum = action_sum.defined() ? add(action_sum, l_act) : l_act;

            if (use_sf) {
                tap_slices.push_back(
                    slice(out.taps[static_cast<size_t>(mc.aligned_layer - 1)], 0, 0, mc.n_visual()));
                const TeacherFeatures teacher =
                    teacher_features({step.views.data(), step.views.size()}, mc, cfg.e_scale);
                ++result.teacher_calls;
                target_parts.push_back(teacher.targets);
            }
        }

        const Tensor l_action = scale(action_sum, 1.0 / cfg.batch_size);
        Tensor loss = l_action;
        Tensor l_align;
        if (use_sf) {
            const Tensor taps_all = (tap_slices.size() == 1) ? tap_slices[0] : concat(tap_slices, 0);
            const Tensor targets_all = (target_parts.size() == 1) ? target_parts[0] : concat(target_parts, 0);
            const Tensor projected = project(taps_all, *projector, BatchNormMode::Training);
            l_align = align_loss(projected, targets_all);
            loss = total_loss(l_action, l_align, weights);
        }
        if (!std::isfinite(loss.value()))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));

        backward(loss);
        adam_step(opt_params, opt);

        win_action += l_action.value();
        if (use_sf) win_align += l_align.value();
        win_total += loss.value();
        ++win_count;

        if (it % cfg.eval_every == 0) {
            const VLAParams frozen = params.detached();
            MetricsRow row;
            row.run_id = run_id;
            row.iteration = it;
            row.l_action = win_action / win_count;
            if (use_sf) row.l_align = win_align / win_count;
            row.total_loss = win_total / win_count;
            row.eval_success_rate = evaluate_success(frozen, cfg.difficulty, cfg.eval_trials, cfg.seed);
            row.wall_ms = wall_ms();
            result.rows.push_back(row);
            win_action = win_align = win_total = 0.0;
            win_count = 0;
        }
    }

    result.final_success = result.rows.empty() ? 0.0 : result.rows.back().eval_success_rate;
    result.checkpoint_path = out_dir + "/checkpoint.sfck";
    result.metrics_path = out_dir + "/metrics.csv";
    save_checkpoint(result.checkpoint_path, params, projector ? &*projector : nullptr, cfg.difficulty,
                    cfg.resolved_text());
    write_metrics_csv(result.metrics_path, result.rows);
    write_timings_csv(out_dir + "/timings.csv", result.rows);
    write_text_file(out_dir + "/config_resolved.txt", cfg.resolved_text());
    return result;
}

}  // namespace sf
