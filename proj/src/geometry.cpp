#include "sf/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sf {

const char* difficulty_name(Difficulty d) {
    return d == Difficulty::TwoView ? "two_view" : "mono_ambiguous";
}

Difficulty difficulty_from_name(const std::string& name) {
    if (name == "two_view") return Difficulty::TwoView;
    if (name == "mono_ambiguous") return Difficulty::MonoAmbiguous;
    throw std::invalid_argument("unknown difficulty '" + name + "'");
}

Camera primary_camera() {
    Camera c;
    c.position = {0.5, -1.15, 1.4};
    c.look_at = {0.5, 0.5, 0.42};
    c.vertical_fov = 1.00;
    return c;
}

Camera wrist_camera() {
    Camera c;
    c.position = {1.55, 0.42, 1.05};
    c.look_at = {0.42, 0.5, 0.40};
    c.vertical_fov = 1.05;
    return c;
}

std::array<double, 3> color_for(int color_id) {
    switch (color_id) {
        case 0: return {0.85, 0.15, 0.10};  // red
        case 1: return {0.10, 0.80, 0.15};  // green
        case 2: return {0.15, 0.20, 0.90};  // blue
        case 3: return {0.90, 0.85, 0.10};  // yellow
        default: return {0.95, 0.95, 0.95};  // effector marker
    }
}

Vec3 camera_forward(const Camera& cam) { return (cam.look_at - cam.position).normalized(); }

namespace {

struct CamBasis {
    Vec3 forward, right, up;
    double tan_half;
    double aspect;
};

CamBasis basis_of(const Camera& cam) {
    CamBasis b;
    b.forward = camera_forward(cam);
    b.right = b.forward.cross(cam.up).normalized();
    b.up = b.right.cross(b.forward);
    b.tan_half = std::tan(0.5 * cam.vertical_fov);
    b.aspect = static_cast<double>(cam.width) / cam.height;
    return b;
}

Vec3 ray_dir(const CamBasis& b, const Camera& cam, int row, int col) {
    const double ndc_x = 2.0 * (col + 0.5) / cam.width - 1.0;
    const double ndc_y = 1.0 - 2.0 * (row + 0.5) / cam.height;
    const Vec3 d = b.forward + b.right * (ndc_x * b.aspect * b.tan_half) + b.up * (ndc_y * b.tan_half);
    return d.normalized();
}

// nearest positive intersection distance along the ray, or -1
double hit_sphere(const Vec3& origin, const Vec3& dir, const Sphere& s) {
    const Vec3 oc = origin - s.center;
    const double b = oc.dot(dir);
    const double c = oc.dot(oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return -1.0;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t < 1e-9) t = -b + sq;
    return t > 1e-9 ? t : -1.0;
}

RenderOutput render_spheres(std::span<const Sphere> spheres, const Vec3& light_dir, const Camera& cam) {
    RenderOutput out;
    out.height = cam.height;
    out.width = cam.width;
    const size_t px = static_cast<size_t>(cam.height) * cam.width;
    out.image.assign(px * 3, 0.0);
    out.depth.assign(px, kDepthSentinel);
    out.pointmap.assign(px * 3, 0.0);
    out.mask.assign(px, 0);

    const CamBasis b = basis_of(cam);
    for (int i = 0; i < cam.height; ++i) {
        for (int j = 0; j < cam.width; ++j) {
            const size_t p = static_cast<size_t>(i) * cam.width + j;
            const Vec3 dir = ray_dir(b, cam, i, j);
            double best_t = -1.0;
            const Sphere* best = nullptr;
            for (const Sphere& s : spheres) {
                const double t = hit_sphere(cam.position, dir, s);
                if (t > 0.0 && (best_t < 0.0 || t < best_t)) {
                    best_t = t;
                    best = &s;
                }
            }
            if (!best) {
                out.pointmap[p * 3 + 0] = kPointSentinel.x;
                out.pointmap[p * 3 + 1] = kPointSentinel.y;
                out.pointmap[p * 3 + 2] = kPointSentinel.z;
                continue;
            }
            const Vec3 point = cam.position + dir * best_t;
            const Vec3 normal = (point - best->center) * (1.0 / best->radius);
            const double diffuse = std::max(0.0, normal.dot(light_dir));
            const auto rgb = color_for(best->color_id);
            for (int c = 0; c < 3; ++c)
                out.image[p * 3 + c] = std::clamp(rgb[static_cast<size_t>(c)] * diffuse + 0.1, 0.0, 1.0);
            out.depth[p] = best_t * dir.dot(b.forward);
            out.pointmap[p * 3 + 0] = point.x;
            out.pointmap[p * 3 + 1] = point.y;
            out.pointmap[p * 3 + 2] = point.z;
            out.mask[p] = 1;
        }
    }
    return out;
}

}  // namespace

RenderOutput render_at(const SceneSpec& scene, const Camera& camera, const Vec3& ee_pos) {
    std::vector<Sphere> spheres = scene.objects;
    if (scene.effector_radius > 0.0)
        spheres.push_back(Sphere{ee_pos, scene.effector_radius, -1});
    return render_spheres(spheres, scene.light_dir, camera);
}

RenderOutput render(const SceneSpec& scene, const Camera& camera) {
    return render_at(scene, camera, scene.effector_start);
}

std::vector<double> unproject(std::span<const double> depth, const Camera& camera) {
    const size_t px = static_cast<size_t>(camera.height) * camera.width;
    if (depth.size() != px)
        throw std::invalid_argument("unproject: depth buffer size " + std::to_string(depth.size()) +
                                    " does not match camera " + std::to_string(px));
    std::vector<double> points(px * 3);
    const CamBasis b = basis_of(camera);
    for (int i = 0; i < camera.height; ++i)
        for (int j = 0; j < camera.width; ++j) {
            const size_t p = static_cast<size_t>(i) * camera.width + j;
            if (depth[p] >= kDepthSentinel) {
                points[p * 3 + 0] = kPointSentinel.x;
                points[p * 3 + 1] = kPointSentinel.y;
                points[p * 3 + 2] = kPointSentinel.z;
                continue;
            }
            const Vec3 dir = ray_dir(b, camera, i, j);
            const double t = depth[p] / dir.dot(b.forward);
            const Vec3 point = camera.position + dir * t;
            points[p * 3 + 0] = point.x;
            points[p * 3 + 1] = point.y;
            points[p * 3 + 2] = point.z;
        }
    return points;
}

namespace {

constexpr int kMaxPlacementAttempts = 1000;

bool intersects_any(const SceneSpec& scene, const Vec3& center, double radius, double clearance) {
    for (const Sphere& s : scene.objects)
        if ((s.center - center).norm() <= s.radius + radius + clearance) return true;
    return false;
}

Vec3 sample_light(Rng& rng) {
    const Vec3 base{0.25, -0.35, 0.9};
    const Vec3 jittered{base.x + rng.uniform(-0.15, 0.15), base.y + rng.uniform(-0.15, 0.15),
                        base.z + rng.uniform(-0.1, 0.1)};
    return jittered.normalized();
}

// Clips ray origin + t*dir against the axis-aligned box [lo,hi]^3; returns
// false when the ray misses it.
bool clip_ray_to_box(const Vec3& origin, const Vec3& dir, double lo, double hi, double& t0, double& t1) {
    t0 = 0.0;
    t1 = 1e30;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < lo || o[a] > hi) return false;
            continue;
        }
        double ta = (lo - o[a]) / d[a];
        double tb = (hi - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

}  // namespace

SceneSpec gen_scene(std::uint64_t seed, Difficulty difficulty) {
    Rng rng(derive_seed("gen-scene", seed, static_cast<std::uint64_t>(difficulty)));
    SceneSpec scene;
    scene.effector_radius = kEffectorRadius;
    scene.light_dir = sample_light(rng);

    const int n_objects = 1 + static_cast<int>(rng.uniform_index(3));
    int palette[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(palette[i], palette[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);

    const Camera cam = primary_camera();
    const CamBasis cb = basis_of(cam);
    int attempts = 0;
    for (int k = 0; k < n_objects; ++k) {
        const double radius = rng.uniform(0.04, 0.10);
        while (true) {
            if (++attempts > kMaxPlacementAttempts)
                throw std::runtime_error("gen_scene: object placement failed after " +
                                         std::to_string(kMaxPlacementAttempts) + " attempts (seed " +
                                         std::to_string(seed) + ")");
            Vec3 center;
            if (difficulty == Difficulty::TwoView) {
                center = {rng.uniform(radius, 1.0 - radius), rng.uniform(radius, 1.0 - radius),
                          rng.uniform(radius, 1.0 - radius)};
            } else {
                // sample a view ray of the single (primary) camera, then a range along it
                const double u = rng.uniform(-0.78, 0.78);
                const double v = rng.uniform(-0.78, 0.78);
                const Vec3 dir =
                    (cb.forward + cb.right * (u * cb.aspect * cb.tan_half) + cb.up * (v * cb.tan_half)).normalized();
                double t0 = 0.0, t1 = 0.0;
                if (!clip_ray_to_box(cam.position, dir, radius, 1.0 - radius, t0, t1) || t1 - t0 < 0.05) continue;
                center = cam.position + dir * rng.uniform(t0, t1);
            }
            if (intersects_any(scene, center, radius, 0.01)) continue;
            scene.objects.push_back(Sphere{center, radius, palette[k]});
            break;
        }
    }
    scene.target_index = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_objects)));

    // effector start: clear of every object and not already at the target
    while (true) {
        if (++attempts > 2 * kMaxPlacementAttempts)
            throw std::runtime_error("gen_scene: effector placement failed (seed " + std::to_string(seed) + ")");
        const Vec3 pos{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        if (intersects_any(scene, pos, kEffectorRadius, 0.01)) continue;
        if ((pos - scene.target().center).norm() < 0.15) continue;
        scene.effector_start = pos;
        break;
    }
    return scene;
}

}  // namespace sf
