#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sf/rng.hpp"

namespace sf {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
    bool operator==(const Vec3&) const = default;
};

struct Sphere {
    Vec3 center;
    double radius = 0.0;
    int color_id = 0;  // 0..3 object palette, -1 effector
    bool operator==(const Sphere&) const = default;
};

enum class Difficulty : std::uint8_t { TwoView = 0, MonoAmbiguous = 1 };

const char* difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);

// Procedural tabletop scene inside the unit workspace box [0,1]^3.
// The effector is drawn as a separate white marker sphere so that closed-loop
// policies can observe their own position; effector_radius == 0 means no marker.
struct SceneSpec {
    std::vector<Sphere> objects;  // 1..3 spheres, distinct color ids
    int target_index = 0;
    Vec3 effector_start;
    double effector_radius = 0.0;
    Vec3 light_dir{0.0, 0.0, 1.0};  // unit, points toward the light

    const Sphere& target() const { return objects[static_cast<size_t>(target_index)]; }
    bool operator==(const SceneSpec&) const = default;
};

struct Camera {
    Vec3 position;
    Vec3 look_at;
    Vec3 up{0.0, 0.0, 1.0};
    double vertical_fov = 0.9;  // radians
    int height = 32;
    int width = 32;
};

constexpr double kDepthSentinel = 10.0;
constexpr Vec3 kPointSentinel{0.0, 0.0, -1.0};
constexpr double kEffectorRadius = 0.025;
constexpr double kMaxActionNorm = 0.10;
constexpr double kGripThreshold = 0.05;

// Fixed rig: a front-top primary camera and an oblique wrist-like camera.
// Both cover the whole workspace box.
Camera primary_camera();
Camera wrist_camera();

struct RenderOutput {
    int height = 0, width = 0;
    std::vector<double> image;     // H*W*3 in [0,1]
    std::vector<double> depth;     // H*W camera-frame z-depth (m), background 10.0
    std::vector<double> pointmap;  // H*W*3 world coords, background (0,0,-1)
    std::vector<std::uint8_t> mask;  // H*W foreground flags
};

// Unit ray through the center of pixel (row, col).
Vec3 pixel_ray_dir(const Camera& cam, int row, int col);
Vec3 camera_forward(const Camera& cam);

// Analytic ray-sphere renderer with Lambertian shading and exact depth /
// point-map ground truth. Draws scene.objects plus the effector marker at
// scene.effector_start (when effector_radius > 0).
RenderOutput render(const SceneSpec& scene, const Camera& camera);

// Same renderer with the effector marker moved to `ee_pos`.
RenderOutput render_at(const SceneSpec& scene, const Camera& camera, const Vec3& ee_pos);

// Inverts the pinhole projection used by render; background pixels (depth at
// the sentinel) map to the point sentinel.
std::vector<double> unproject(std::span<const double> depth, const Camera& camera);

// Deterministic scene generator. mono_ambiguous places every object center
// exactly on a view ray of the primary camera at a randomized range, so
// image-plane position alone underdetermines depth.
SceneSpec gen_scene(std::uint64_t seed, Difficulty difficulty);

std::array<double, 3> color_for(int color_id);

}  // namespace sf
