#pragma once

#include <optional>
#include <string>

#include "sf/model.hpp"
#include "sf/spatial_forcing.hpp"

namespace sf {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    ModelConfig config;
    Difficulty difficulty = Difficulty::MonoAmbiguous;
    std::string experiment_config_text;  // resolved key=value text of the run
    VLAParams params;
    std::optional<Projector> projector;  // present when the run trained with alpha > 0
};

// Binary little-endian container, magic "SFCK" version 1: serialized
// ModelConfig + difficulty + the resolved experiment config text, then
// name-length-prefixed f64 parameter blobs. Spatial-forcing parameters
// (batch-norm affine + running stats, projector MLP) live under "sf/".
void save_checkpoint(const std::string& path, VLAParams& params, Projector* projector,
                     Difficulty difficulty, const std::string& experiment_config_text);
Checkpoint load_checkpoint(const std::string& path);

constexpr std::uint8_t kCheckpointVersion = 1;

}  // namespace sf
