#include "sf/episode.hpp"

#include <algorithm>
#include <stdexcept>

namespace sf {

StoredView to_stored(const RenderOutput& r) {
    StoredView v;
    v.height = static_cast<std::uint16_t>(r.height);
    v.width = static_cast<std::uint16_t>(r.width);
    v.image.assign(r.image.begin(), r.image.end());
    v.depth.assign(r.depth.begin(), r.depth.end());
    v.pointmap.assign(r.pointmap.begin(), r.pointmap.end());
    v.mask = r.mask;
    return v;
}

std::vector<std::uint16_t> encode_instruction(int target_color_id) {
    if (target_color_id < 0 || target_color_id > 3)
        throw std::invalid_argument("encode_instruction: color id " + std::to_string(target_color_id));
    return {kTokReach, static_cast<std::uint16_t>(kTokColorBase + target_color_id), kTokEos, kTokPad};
}

Action expert_action(const SceneSpec& scene, const Vec3& ee_pos) {
    const Vec3 to_target = scene.target().center - ee_pos;
    const double dist = to_target.norm();
    const Vec3 delta = dist > kMaxActionNorm ? to_target * (kMaxActionNorm / dist) : to_target;
    const double grip = dist < kGripThreshold ? 1.0 : 0.0;
    return {delta.x, delta.y, delta.z, grip};
}

namespace {

std::array<StoredView, 2> observe(const SceneSpec& scene, Difficulty difficulty, const Vec3& ee_pos) {
    const StoredView primary = to_stored(render_at(scene, primary_camera(), ee_pos));
    if (difficulty == Difficulty::MonoAmbiguous) return {primary, primary};
    return {primary, to_stored(render_at(scene, wrist_camera(), ee_pos))};
}

}  // namespace

RolloutResult rollout(const SceneSpec& scene, Difficulty difficulty,
                      const std::vector<std::uint16_t>& instruction_ids, const Policy& policy,
                      int max_steps, Episode* record) {
    if (record) {
        record->scene = scene;
        record->instruction_ids = instruction_ids;
        record->steps.clear();
        record->success = false;
    }
    Vec3 ee = scene.effector_start;
    RolloutResult result;
    for (int step = 0; step < max_steps; ++step) {
        const auto views = observe(scene, difficulty, ee);
        Action a = policy(views, instruction_ids);

        // actuation limit with fp slack so expert actions pass through exactly
        Vec3 delta{a[0], a[1], a[2]};
        const double n = delta.norm();
        if (n > kMaxActionNorm * (1.0 + 1e-12)) {
            delta = delta * (kMaxActionNorm / n);
            a[0] = delta.x;
            a[1] = delta.y;
            a[2] = delta.z;
        }
        if (record) record->steps.push_back(EpisodeStep{views, ee, a});

        ee = ee + delta;
        ee.x = std::clamp(ee.x, 0.0, 1.0);
        ee.y = std::clamp(ee.y, 0.0, 1.0);
        ee.z = std::clamp(ee.z, 0.0, 1.0);
        result.steps = step + 1;
        if (a[3] >= 0.5) {
            result.success = (ee - scene.target().center).norm() < kGripThreshold;
            break;
        }
    }
    if (record) record->success = result.success;
    return result;
}

Episode gen_episode(std::uint64_t seed, Difficulty difficulty) {
    const SceneSpec scene = gen_scene(seed, difficulty);
    Episode ep;
    ep.scene = scene;
    ep.instruction_ids = encode_instruction(scene.target().color_id);
    // the expert reads the scene state directly; views are recorded for training
    Vec3 pos = scene.effector_start;
    for (int step = 0; step < kMaxEpisodeSteps; ++step) {
        const auto views = observe(scene, difficulty, pos);
        const Action a = expert_action(scene, pos);
        ep.steps.push_back(EpisodeStep{views, pos, a});
        pos = pos + Vec3{a[0], a[1], a[2]};
        if (a[3] >= 0.5) {
            ep.success = (pos - scene.target().center).norm() < kGripThreshold;
            break;
        }
    }
    return ep;
}

}  // namespace sf
