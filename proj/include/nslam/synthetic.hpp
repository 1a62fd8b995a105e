#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nslam/dataio.hpp"
#include "nslam/encoding.hpp"
#include "nslam/meshing.hpp"

namespace nslam {

/// Analytic solid: an axis-aligned room shell, spheres, or boxes. Each has an
/// albedo modulated by a smooth sinusoidal pattern so color carries texture.
struct Primitive {
  enum class Kind { Room, Sphere, Box };
  Kind kind = Kind::Sphere;
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Ones();  // half extents; the radius is half.x() for spheres
  Vec3 albedo = Vec3::Constant(0.5);
  Vec3 wall_albedo[6] = {};  // per-wall colors of a room (-x, +x, -y, +y, -z, +z)

  /// Signed distance, positive in free space.
  double sdf(const Vec3& x) const;
  Vec3 base_color(const Vec3& x) const;
};

struct SyntheticScene {
  std::vector<Primitive> primitives;  // union by min
  Vec3 light_dir = Vec3(0.3, -1.0, -0.5).normalized();  // towards the light
  double ambient = 0.35;

  /// Room x in [-2, 2], y in [-1.3, 1.2] (floor at +1.2, +y down), z in [-1, 2],
  /// with a sphere and a box resting on the floor.
  static SyntheticScene desk_room();

  double sdf(const Vec3& x) const;
  Vec3 normal(const Vec3& x) const;
  /// Lambertian shading of the nearest primitive's albedo.
  Vec3 shade(const Vec3& x) const;
  /// Sphere tracing; range along the unit direction to the first surface.
  std::optional<double> raycast(const Vec3& origin, const Vec3& dir, double far) const;
  /// Box of the room shell.
  SceneBounds room_bounds() const;
};

struct SynthConfig {
  int n_frames = 50;
  int width = 80;
  int height = 60;
  double fx = 60.0, fy = 60.0;
  double noise_sigma = 0.005;  // meters, Gaussian on z-depth
  double far = 6.0;            // beyond this a pixel has no depth
  double mesh_voxel = 0.02;
  double orbit_radius = 1.2;
  double yaw_span_deg = 60.0;
  double pitch_amp_deg = 8.0;
  double bob_amp = 0.05;
  double frame_rate = 30.0;
  std::uint64_t seed = 0;

  Intrinsics intrinsics() const;
};

/// Smooth orbit inside the room, at rest at both ends. Frame 0 is the identity pose.
std::vector<Pose> orbit_trajectory(const SynthConfig& cfg);

struct RenderedView {
  std::vector<Vec3> color;
  std::vector<double> depth;  // z-depth, 0 where no surface lies within `far`
};

/// Noise-free color and depth of the scene from a camera-to-world pose.
RenderedView render_view(const SyntheticScene& scene, const Intrinsics& intr, const Pose& pose, double far);

/// Marching cubes on the analytic SDF over the room box plus a margin.
TriangleMesh scene_mesh(const SyntheticScene& scene, double voxel);

/// Writes intrinsics.txt, frames/NNNN.{color,depth}.png, trajectory.txt and
/// gt_mesh.ply into `out_dir`. Throws Errc::CameraInsideGeometry when a pose
/// lies within 5 cm of a surface.
void generate_synthetic(const SyntheticScene& scene, const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace nslam
