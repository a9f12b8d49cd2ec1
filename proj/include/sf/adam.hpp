#pragma once

#include <vector>

#include "sf/tensor.hpp"

namespace sf {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are lazily sized against the first step's
// parameter list and must match on every later step.
struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    long step_count = 0;
    AdamHyper hyper;
};

// One in-place update over `params` using their accumulated grads (a missing
// grad buffer counts as zero). Clears grads afterwards.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace sf
