#pragma once

#include <string>
#include <vector>

#include "sf/trainer.hpp"

namespace sf {

enum class AblationAxis { Alpha, Layer, Iterations, DataFraction };

AblationAxis ablation_axis_from_name(const std::string& name);
const char* ablation_axis_name(AblationAxis axis);

struct AblationCell {
    std::string value;
    bool ok = false;
    std::string error;
    double success_rate = 0.0;
    long iters_to_threshold = -1;  // first eval iteration reaching the baseline's final success
    double probe_rmse = 0.0;
    std::string run_dir;
};

struct AblationResult {
    std::vector<AblationCell> cells;
    double baseline_final_success = 0.0;
    std::string summary_path;
    std::string dataset_path;
};

// One full train + probe + eval run per value over a shared dataset and shared
// eval seeds. The alpha = 0 baseline supplies the iterations-to-threshold
// reference. Cells are isolated: a failed cell does not abort its siblings.
// jobs > 1 runs cells on that many threads.
AblationResult run_ablation(const ExperimentConfig& base, AblationAxis axis,
                            const std::vector<std::string>& values, const std::string& out_dir,
                            int jobs = 1);

}  // namespace sf
