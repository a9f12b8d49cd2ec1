#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sf/geometry.hpp"
#include "sf/model.hpp"

namespace sf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Plain-text key=value run configuration ('#' starts a comment). Unknown keys
// are rejected; every value is range-checked. The resolved config is echoed
// into the run directory in canonical key order.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    Difficulty difficulty = Difficulty::MonoAmbiguous;
    int n_train_episodes = 400;
    double data_fraction = 1.0;
    int iterations = 5000;
    int batch_size = 8;
    double lr = 1e-3;
    double alpha = 0.5;
    int eval_trials = 100;
    int eval_every = 500;
    double e_scale = 0.1;
    int probe_steps = 2000;
    double probe_lr = 0.01;
    ModelConfig model;

    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string resolved_text() const;
    void validate() const;
};

// Shortest round-trip decimal representation of a double.
std::string format_double(double v);
// Fixed 6-significant-digit representation used in CSV output.
std::string format_g6(double v);

}  // namespace sf
