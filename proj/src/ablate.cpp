#include "sf/ablate.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sf/checkpoint.hpp"
#include "sf/probing.hpp"

namespace sf {

AblationAxis ablation_axis_from_name(const std::string& name) {
    if (name == "alpha") return AblationAxis::Alpha;
    if (name == "layer") return AblationAxis::Layer;
    if (name == "iterations") return AblationAxis::Iterations;
    if (name == "data_fraction") return AblationAxis::DataFraction;
    throw std::invalid_argument("unknown ablation axis '" + name +
                                "' (expected alpha|layer|iterations|data_fraction)");
}

const char* ablation_axis_name(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::Alpha: return "alpha";
        case AblationAxis::Layer: return "layer";
        case AblationAxis::Iterations: return "iterations";
        case AblationAxis::DataFraction: return "data_fraction";
    }
    return "?";
}

namespace {

ExperimentConfig apply_axis(const ExperimentConfig& base, AblationAxis axis, const std::string& value) {
    ExperimentConfig cfg = base;
    switch (axis) {
        case AblationAxis::Alpha: cfg.alpha = std::stod(value); break;
        case AblationAxis::Layer: cfg.model.aligned_layer = std::stoi(value); break;
        case AblationAxis::Iterations: cfg.iterations = std::stoi(value); break;
        case AblationAxis::DataFraction: cfg.data_fraction = std::stod(value); break;
    }
    cfg.validate();
    return cfg;
}

long first_iteration_reaching(std::span<const MetricsRow> rows, double threshold) {
    for (const MetricsRow& r : rows)
        if (r.eval_success_rate >= threshold - 1e-12) return r.iteration;
    return -1;
}

double probe_checkpoint(const std::string& ckpt_path, const Dataset& data,
                        const ExperimentConfig& cfg) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const DiagnosticsReport report = alignment_diagnostics(
        ck.params, nullptr, data, ck.config.aligned_layer, cfg.probe_steps, cfg.probe_lr,
        derive_seed("ablate-probe", cfg.seed), cfg.e_scale);
    return report.probe_rmse;
}

}  // namespace

AblationResult run_ablation(const ExperimentConfig& base, AblationAxis axis,
                            const std::vector<std::string>& values, const std::string& out_dir,
                            int jobs) {
    if (values.empty()) throw std::invalid_argument("ablation needs at least one value");
    std::filesystem::create_directories(out_dir);

    AblationResult result;
    result.dataset_path = out_dir + "/dataset.sfds";
    Dataset data;
    if (std::filesystem::exists(result.dataset_path)) {
        data = read_dataset(result.dataset_path);
    } else {
        data = generate_dataset(base);
        write_dataset(data, result.dataset_path);
    }

    // baseline run (alpha = 0) supplies the iterations-to-threshold reference;
    // reuse the matching cell when the sweep already contains it
    int baseline_cell = -1;
    if (axis == AblationAxis::Alpha)
        for (size_t i = 0; i < values.size(); ++i)
            if (std::stod(values[i]) == 0.0) baseline_cell = static_cast<int>(i);

    result.cells.resize(values.size());
    std::vector<std::vector<MetricsRow>> cell_rows(values.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= values.size()) return;
            AblationCell& cell = result.cells[i];
            cell.value = values[i];
            cell.run_dir = out_dir + "/cell_" + ablation_axis_name(axis) + "_" + values[i];
            try {
                const ExperimentConfig cfg = apply_axis(base, axis, values[i]);
                const TrainResult tr = train_model(cfg, data, cell.run_dir);
                cell.success_rate = tr.final_success;
                cell_rows[i] = tr.rows;
                cell.probe_rmse = probe_checkpoint(tr.checkpoint_path, data, cfg);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
        }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(values.size())));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (baseline_cell >= 0 && result.cells[static_cast<size_t>(baseline_cell)].ok) {
        result.baseline_final_success = result.cells[static_cast<size_t>(baseline_cell)].success_rate;
    } else {
        ExperimentConfig bcfg = base;
        bcfg.alpha = 0.0;
        const TrainResult tr = train_model(bcfg, data, out_dir + "/baseline");
        result.baseline_final_success = tr.final_success;
    }

    for (size_t i = 0; i < result.cells.size(); ++i)
        if (result.cells[i].ok)
            result.cells[i].iters_to_threshold =
                first_iteration_reaching(cell_rows[i], result.baseline_final_success);

    result.summary_path = out_dir + "/summary.csv";
    std::ofstream out(result.summary_path, std::ios::binary);
    out << "axis,value,success_rate,iters_to_threshold,probe_rmse\n";
    for (const AblationCell& cell : result.cells) {
        out << ablation_axis_name(axis) << ',' << cell.value << ',';
        if (cell.ok) {
            out << format_g6(cell.success_rate) << ',';
            if (cell.iters_to_threshold >= 0) out << cell.iters_to_threshold;
            out << ',' << format_g6(cell.probe_rmse);
        } else {
            out << ",,";
        }
        out << '\n';
    }
    return result;
}

}  // namespace sf
