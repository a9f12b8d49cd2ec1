#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sf/config.hpp"
#include "sf/dataset.hpp"
#include "sf/model.hpp"

namespace sf {

struct MetricsRow {
    std::string run_id;
    long iteration = 0;
    double l_action = 0.0;
    std::optional<double> l_align;  // absent on alpha = 0 runs
    double total_loss = 0.0;
    double eval_success_rate = 0.0;
    std::optional<double> probe_rmse;
    long wall_ms = 0;
};

// metrics.csv holds the deterministic columns; wall_ms goes to timings.csv so
// re-runs with identical seeds reproduce metrics byte-for-byte.
void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows);
void write_timings_csv(const std::string& path, std::span<const MetricsRow> rows);
std::string metrics_csv_text(std::span<const MetricsRow> rows);

struct TrainResult {
    std::vector<MetricsRow> rows;
    long teacher_calls = 0;
    double final_success = 0.0;
    std::string checkpoint_path;
    std::string metrics_path;
};

std::string run_id_for(const ExperimentConfig& cfg);

// Expert demonstrations for episode seeds cfg.seed + i, i < n_train_episodes.
Dataset generate_dataset(const ExperimentConfig& cfg);

// Evenly spaced subsample indices over [0, n) covering round(fraction * n) items.
std::vector<int> fraction_indices(int n, double fraction);

// Closed-loop evaluation on held-out scenes (seeds seed_base + 1e6 + trial).
double evaluate_success(const VLAParams& frozen, Difficulty difficulty, int trials,
                        std::uint64_t seed_base);

// Behavior-cloning loop with optional spatial-forcing alignment; writes
// checkpoint.sfck, metrics.csv, timings.csv and config_resolved.txt to out_dir.
TrainResult train_model(const ExperimentConfig& cfg, const Dataset& data, const std::string& out_dir);

}  // namespace sf
