#pragma once

#include <vector>

#include "sf/tensor.hpp"

namespace sf {

enum class BatchNormMode { Training, Frozen };

// Batch normalization over [batch, features] with trainable per-feature affine.
// Training mode normalizes by batch statistics (biased variance) and updates
// the running buffers; frozen mode normalizes by the running buffers.
struct BatchNormState {
    Tensor gamma;  // [1, features]
    Tensor beta;   // [1, features]
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;

    static BatchNormState init(int features);
    int features() const { return gamma.cols(); }
};

// Differentiable w.r.t. the input and (gamma, beta). Training mode requires
// batch >= 2; a single-row batch has degenerate variance.
Tensor batch_norm(const Tensor& x, BatchNormState& state, BatchNormMode mode);

constexpr double kBatchNormEps = 1e-8;

}  // namespace sf
