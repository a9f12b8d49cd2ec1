#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sf/geometry.hpp"

namespace sf {

// View buffers at dataset precision (f32). Fresh renders are quantized through
// this type before a policy or the teacher sees them, so training data and
// closed-loop observations match exactly.
struct StoredView {
    std::uint16_t height = 0, width = 0;
    std::vector<float> image;     // H*W*3
    std::vector<float> depth;     // H*W
    std::vector<float> pointmap;  // H*W*3
    std::vector<std::uint8_t> mask;  // H*W, one byte per pixel in memory

    bool operator==(const StoredView&) const = default;
};

StoredView to_stored(const RenderOutput& r);

using Action = std::array<double, 4>;  // dx, dy, dz (m), gripper

struct EpisodeStep {
    std::array<StoredView, 2> views;
    Vec3 ee_pos;    // before the action
    Action action;  // the action applied from ee_pos

    bool operator==(const EpisodeStep&) const = default;
};

constexpr int kMaxEpisodeSteps = 20;
constexpr int kInstructionLen = 4;

// Token vocabulary for "reach <color>" instructions (16 ids total).
enum InstructionToken : std::uint16_t {
    kTokPad = 0,
    kTokReach = 1,
    kTokColorBase = 2,  // 2..5 = red, green, blue, yellow
    kTokEos = 6,
};

std::vector<std::uint16_t> encode_instruction(int target_color_id);

struct Episode {
    std::optional<SceneSpec> scene;  // present when generated, absent after file load
    std::vector<std::uint16_t> instruction_ids;
    std::vector<EpisodeStep> steps;
    bool success = false;
};

// Greedy expert: step of at most 0.10 m toward the target center, gripper
// closes within 0.05 m.
Action expert_action(const SceneSpec& scene, const Vec3& ee_pos);

// A policy maps the two stored views + instruction to an action.
using Policy = std::function<Action(const std::array<StoredView, 2>&, const std::vector<std::uint16_t>&)>;

struct RolloutResult {
    bool success = false;
    int steps = 0;
};

// Closed-loop episode: renders, queries the policy, applies the action with the
// 0.10 m actuation limit and workspace clamp, and terminates when the gripper
// output reaches 0.5 or after max_steps. Records per-step data when `record`
// is given. mono_ambiguous observes the primary camera in both view slots.
RolloutResult rollout(const SceneSpec& scene, Difficulty difficulty,
                      const std::vector<std::uint16_t>& instruction_ids, const Policy& policy,
                      int max_steps = kMaxEpisodeSteps, Episode* record = nullptr);

// Expert demonstration episode, deterministic in (seed, difficulty).
Episode gen_episode(std::uint64_t seed, Difficulty difficulty);

}  // namespace sf
