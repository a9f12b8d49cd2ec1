#pragma once

#include <optional>

#include "sf/dataset.hpp"
#include "sf/spatial_forcing.hpp"

namespace sf {

class ProbingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two-layer MLP predicting per-patch mean camera depth (meters) from a frozen
// backbone tap. The backbone is never updated during probing.
struct ProbeHead {
    Tensor w1, b1, w2, b2;  // d_model -> 64 -> 1

    static ProbeHead init(int d_model, Rng& rng);
    std::vector<Tensor> all();
    Tensor apply(const Tensor& x) const;  // [n, d] -> [n, 1]
};

struct ProbePairs {
    Tensor inputs;               // [n, d_model], no grad
    std::vector<double> labels;  // per-patch mean foreground depth (m)
};

// (layer-tap, mean foreground depth) pairs over foreground patches. Visits at
// most `max_steps` timesteps, stride-subsampled deterministically.
ProbePairs collect_probe_pairs(const VLAParams& frozen, const Dataset& data, int layer,
                               int max_steps = 512);

ProbeHead train_probe_core(const ProbePairs& pairs, int steps, std::uint64_t seed, double lr);
double probe_rmse_core(const ProbeHead& probe, const ProbePairs& pairs);

ProbeHead train_probe(const VLAParams& frozen, const Dataset& train_data, int layer, int steps,
                      std::uint64_t seed, double lr);
double probe_rmse(const ProbeHead& probe, const VLAParams& frozen, const Dataset& eval_data, int layer);

// Linear centered-kernel-alignment similarity in [0, 1]; invariant to
// orthogonal rotation and isotropic scaling of either side.
double linear_cka(const Tensor& x, const Tensor& y);

struct DiagnosticsReport {
    double probe_rmse = 0.0;
    double linear_cka = 0.0;  // raw layer taps vs teacher targets
    std::optional<double> mean_cosine;        // trained projector vs targets (needs projector)
    std::optional<double> centroid_distance;  // mean projected embedding vs mean target
};

// Splits the dataset 80/20 by episode index (train/eval), trains the probe on
// the train split and reports everything on the eval split. Requires at least
// 100 visual-token samples.
DiagnosticsReport alignment_diagnostics(const VLAParams& frozen, Projector* projector,
                                        const Dataset& data, int layer, int probe_steps,
                                        double probe_lr, std::uint64_t seed, double e_scale);

}  // namespace sf
