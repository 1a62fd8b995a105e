#include "nslam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "nslam/error.hpp"

namespace nslam {

namespace {

double box_sdf(const Vec3& x, const Vec3& c, const Vec3& h) {
  const Vec3 q = (x - c).cwiseAbs() - h;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double pattern(const Vec3& x) {
  return 0.7 + 0.1 * (std::sin(9.0 * x.x() + 1.0) + std::sin(11.0 * x.y() + 2.0) + std::sin(10.0 * x.z() + 0.5));
}

}  // namespace

double Primitive::sdf(const Vec3& x) const {
  switch (kind) {
    case Kind::Room: return -box_sdf(x, center, half);
    case Kind::Sphere: return (x - center).norm() - half.x();
    case Kind::Box: return box_sdf(x, center, half);
  }
  return 0;
}

Vec3 Primitive::base_color(const Vec3& x) const {
  Vec3 a = albedo;
  if (kind == Kind::Room) {
    // Nearest wall picks the albedo.
    const Vec3 lo = x - (center - half), hi = (center + half) - x;
    int best = 0;
    double d = lo.x();
    for (int axis = 0; axis < 3; ++axis) {
      if (lo[axis] < d) d = lo[axis], best = 2 * axis;
      if (hi[axis] < d) d = hi[axis], best = 2 * axis + 1;
    }
    a = wall_albedo[best];
  }
  return a * pattern(x);
}

SyntheticScene SyntheticScene::desk_room() {
  SyntheticScene s;
  Primitive room;
  room.kind = Primitive::Kind::Room;
  room.center = Vec3(0.0, -0.05, 0.5);
  room.half = Vec3(2.0, 1.25, 1.5);
  room.wall_albedo[0] = Vec3(0.80, 0.55, 0.45);
  room.wall_albedo[1] = Vec3(0.45, 0.65, 0.80);
  room.wall_albedo[2] = Vec3(0.90, 0.90, 0.85);  // ceiling
  room.wall_albedo[3] = Vec3(0.55, 0.45, 0.35);  // floor
  room.wall_albedo[4] = Vec3(0.60, 0.75, 0.55);
  room.wall_albedo[5] = Vec3(0.85, 0.80, 0.50);
  s.primitives.push_back(room);

  Primitive sphere;
  sphere.kind = Primitive::Kind::Sphere;
  sphere.center = Vec3(0.45, 0.75, 1.45);
  sphere.half = Vec3::Constant(0.45);
  sphere.albedo = Vec3(0.85, 0.30, 0.25);
  s.primitives.push_back(sphere);

  Primitive box;
  box.kind = Primitive::Kind::Box;
  box.center = Vec3(-0.6, 0.9, 1.5);
  box.half = Vec3(0.3, 0.3, 0.3);
  box.albedo = Vec3(0.25, 0.40, 0.85);
  s.primitives.push_back(box);
  return s;
}

double SyntheticScene::sdf(const Vec3& x) const {
  double s = std::numeric_limits<double>::infinity();
  for (const Primitive& p : primitives) s = std::min(s, p.sdf(x));
  return s;
}

Vec3 SyntheticScene::normal(const Vec3& x) const {
  constexpr double h = 1e-6;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = sdf(x + e) - sdf(x - e);
  }
  return g.normalized();
}

Vec3 SyntheticScene::shade(const Vec3& x) const {
  std::size_t best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const double s = std::abs(primitives[i].sdf(x));
    if (s < d) d = s, best = i;
  }
  const double lambert = std::max(0.0, normal(x).dot(light_dir));
  return (primitives[best].base_color(x) * (ambient + (1.0 - ambient) * lambert)).cwiseMin(1.0);
}

std::optional<double> SyntheticScene::raycast(const Vec3& origin, const Vec3& dir, double far) const {
  double t = 0;
  for (int i = 0; i < 4096 && t <= far; ++i) {
    const double s = sdf(origin + t * dir);
    if (s < 1e-9) return t;
    t += s;
  }
  return std::nullopt;
}

SceneBounds SyntheticScene::room_bounds() const {
  for (const Primitive& p : primitives) {
    if (p.kind == Primitive::Kind::Room) return SceneBounds{p.center - p.half, p.center + p.half};
  }
  throw Error(Errc::ConfigError, "scene has no room primitive");
}

Intrinsics SynthConfig::intrinsics() const {
  Intrinsics intr;
  intr.fx = fx;
  intr.fy = fy;
  intr.cx = 0.5 * (width - 1);
  intr.cy = 0.5 * (height - 1);
  intr.width = width;
  intr.height = height;
  intr.depth_scale = 1.0 / 5000.0;
  return intr;
}

std::vector<Pose> orbit_trajectory(const SynthConfig& cfg) {
  // The orbit circles a pivot straight ahead of the first camera, starting
  // and ending at rest (smoothstep timing).
  const double pi = std::acos(-1.0);
  const Vec3 pivot(0.0, 0.0, cfg.orbit_radius);
  std::vector<Pose> out;
  for (int k = 0; k < cfg.n_frames; ++k) {
    const double lin = cfg.n_frames > 1 ? double(k) / (cfg.n_frames - 1) : 0.0;
    const double s = lin * lin * (3.0 - 2.0 * lin);
    const double yaw = cfg.yaw_span_deg * pi / 180.0 * s;
    const double pitch = cfg.pitch_amp_deg * pi / 180.0 * std::sin(pi * s);
    const Vec3 fwd(std::sin(yaw), 0.0, std::cos(yaw));
    Vec3 c = pivot - cfg.orbit_radius * fwd;
    c.y() += cfg.bob_amp * std::sin(2.0 * pi * s);
    Mat3 Ry;
    Ry << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);
    Mat3 Rx;  // positive pitch tilts the view towards +y (down)
    Rx << 1, 0, 0, 0, std::cos(pitch), std::sin(pitch), 0, -std::sin(pitch), std::cos(pitch);
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = Ry * Rx;
    T.topRightCorner<3, 1>() = c;
    out.push_back(k == 0 ? Pose::identity() : Pose::from_matrix(T));
  }
  return out;
}

RenderedView render_view(const SyntheticScene& scene, const Intrinsics& intr, const Pose& pose, double far) {
  RenderedView view;
  const std::size_t n = std::size_t(intr.width) * intr.height;
  view.color.assign(n, Vec3::Zero());
  view.depth.assign(n, 0.0);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Ray ray = pixel_to_ray(intr, pose, u, v);
      const auto t = scene.raycast(ray.origin, ray.direction, far);
      if (!t) continue;
      const std::size_t i = std::size_t(v) * intr.width + u;
      view.depth[i] = *t / intr.backproject(u, v).norm();
      view.color[i] = scene.shade(ray.origin + *t * ray.direction);
    }
  }
  return view;
}

TriangleMesh scene_mesh(const SyntheticScene& scene, double voxel) {
  const SceneBounds room = scene.room_bounds();
  // The odd offset keeps lattice points off the walls.
  const Vec3 margin = Vec3::Constant(2.0 * voxel + 0.0037);
  return extract_isosurface(
      [&](std::span<const Vec3> xs, std::span<double> out) {
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = scene.sdf(xs[i]);
      },
      SceneBounds{room.min - margin, room.max + margin}, voxel);
}

void generate_synthetic(const SyntheticScene& scene, const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.width < 16 || cfg.height < 16) throw Error(Errc::ConfigError, "synthetic resolution must be at least 16x16");
  if (cfg.n_frames < 1) throw Error(Errc::ConfigError, "synthetic dataset needs at least one frame");
  const Intrinsics intr = cfg.intrinsics();
  const std::vector<Pose> poses = orbit_trajectory(cfg);
  for (const Pose& p : poses) {
    if (scene.sdf(p.translation()) < 0.05) {
      throw Error(Errc::CameraInsideGeometry, "camera path enters the scene geometry");
    }
  }
  std::filesystem::create_directories(out_dir / "frames");
  write_intrinsics(out_dir / "intrinsics.txt", intr);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  std::vector<StampedPose> traj;
  for (int k = 0; k < cfg.n_frames; ++k) {
    RenderedView view = render_view(scene, intr, poses[k], cfg.far);
    if (cfg.noise_sigma > 0) {
      for (double& d : view.depth)
        if (d > 0) d = std::max(d + noise(rng), intr.depth_scale);
    }
    char name[32];
    std::snprintf(name, sizeof name, "%04d", k);
    write_color_png(out_dir / "frames" / (std::string(name) + ".color.png"), intr.width, intr.height, view.color);
    write_depth_png(out_dir / "frames" / (std::string(name) + ".depth.png"), intr.width, intr.height, view.depth,
                    intr.depth_scale);
    traj.push_back({k / cfg.frame_rate, poses[k]});
  }
  write_trajectory(out_dir / "trajectory.txt", traj);
  write_ply(out_dir / "gt_mesh.ply", scene_mesh(scene, cfg.mesh_voxel));
}

}  // namespace nslam
