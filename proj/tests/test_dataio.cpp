#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "nslam/dataio.hpp"
#include "nslam/error.hpp"
#include "nslam/synthetic.hpp"

using namespace nslam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nslam_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::optional<Errc> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SyntheticScene empty_room() {
  SyntheticScene s = SyntheticScene::desk_room();
  s.primitives.resize(1);  // the shell only
  return s;
}

// Minimal TUM sequence: 4x3 frames, depth raw value 5000 everywhere.
fs::path write_tum(const std::string& name, double depth_jitter) {
  const fs::path dir = scratch(name);
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  std::ofstream rgb(dir / "rgb.txt"), depth(dir / "depth.txt"), gt(dir / "groundtruth.txt");
  rgb << "# color images\n# file: test\n# timestamp filename\n";
  depth << "# depth maps\n";
  gt << "# timestamp tx ty tz qx qy qz qw\n";
  for (int i = 0; i < 3; ++i) {
    const double t = 100.0 + 0.1 * i;
    const std::string c = "rgb/" + std::to_string(i) + ".png", d = "depth/" + std::to_string(i) + ".png";
    write_color_png(dir / c, 4, 3, std::vector<Vec3>(12, Vec3(0.2, 0.4, 0.6)));
    write_depth_png(dir / d, 4, 3, std::vector<double>(12, 1.0), 1.0 / 5000);
    rgb << std::fixed << t << ' ' << c << '\n';
    depth << std::fixed << t + depth_jitter << ' ' << d << '\n';
    gt << std::fixed << t - 0.003 << ' ' << i << " 0 0 0 0 0 1\n";
  }
  return dir;
}

const Intrinsics kTumIntr{3, 3, 1.5, 1.0, 4, 3, 1.0 / 5000};

}  // namespace

TEST(Tum, LoadsAndScalesDepth) {
  const Dataset ds = load_tum(write_tum("tum", 0.01), kTumIntr);
  ASSERT_EQ(ds.size(), 3u);
  ASSERT_TRUE(ds.has_ground_truth());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ds.gt_poses[i].translation().x(), double(i), 1e-12);
  const Frame f = ds.load_frame(1);
  EXPECT_EQ(f.timestamp, ds.frames[1].timestamp);
  for (double d : f.depth) EXPECT_EQ(d, 1.0);
  EXPECT_NEAR(f.color_at(2, 1).y(), 0.4, 0.5 / 255);
}

TEST(Tum, DepthBeyondToleranceIsNotAssociated) {
  EXPECT_EQ(code_of([] { load_tum(write_tum("tum_far", 0.05), kTumIntr); }), Errc::NoAssociations);
  EXPECT_EQ(load_tum(write_tum("tum_loose", 0.05), kTumIntr, 0.06).size(), 3u);
}

TEST(Tum, SizeMismatchIsReported) {
  Intrinsics wrong = kTumIntr;
  wrong.width = 5;
  wrong.cx = 2;
  const Dataset ds = load_tum(write_tum("tum_size", 0.0), wrong);
  EXPECT_EQ(code_of([&] { ds.load_frame(0); }), Errc::DatasetError);
}

TEST(Tum, MissingFilesAreReported) {
  EXPECT_EQ(code_of([] { load_tum("/nonexistent/tum", kTumIntr); }), Errc::MissingFile);
  const fs::path dir = write_tum("tum_norgb", 0.0);
  fs::remove(dir / "rgb.txt");
  EXPECT_EQ(code_of([&] { load_tum(dir, kTumIntr); }), Errc::MissingFile);
}

TEST(Association, NearestWithinWindow) {
  const std::vector<int> m = associate_timestamps({0.0, 1.004, 2.5, 3.0}, {0.01, 1.0, 1.01, 3.03}, 0.02);
  EXPECT_EQ(m, (std::vector<int>{0, 1, -1, -1}));
}

TEST(Association, StampedListSkipsComments) {
  const fs::path dir = scratch("list");
  std::ofstream(dir / "l.txt") << "# a\n\n1.5 x.png\n# b\n2.5 y.png\n";
  const auto l = read_stamped_list(dir / "l.txt");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[1].timestamp, 2.5);
  EXPECT_EQ(l[1].path, "y.png");
}

TEST(TrajectoryIo, Roundtrip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.7);
  std::vector<StampedPose> traj;
  for (int i = 0; i < 20; ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = g(rng);
    traj.push_back({1305031102.175304 + 0.033 * i, Pose{xi}});
  }
  const fs::path f = scratch("traj") / "t.txt";
  write_trajectory(f, traj);
  const auto back = read_trajectory(f);
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_NEAR(back[i].timestamp, traj[i].timestamp, 1e-6);
    // Nine decimals per quaternion component bound each matrix entry by a few 1e-9.
    EXPECT_LT((back[i].pose.matrix() - traj[i].pose.matrix()).cwiseAbs().maxCoeff(), 5e-9);
  }
}

TEST(TrajectoryIo, MalformedLineIsAFormatError) {
  const fs::path f = scratch("badtraj") / "t.txt";
  std::ofstream(f) << "0 1 2 3 0 0 0\n";
  EXPECT_EQ(code_of([&] { read_trajectory(f); }), Errc::FormatError);
  EXPECT_EQ(code_of([&] { read_trajectory(f.parent_path() / "none.txt"); }), Errc::MissingFile);
}

TEST(PngIo, ColorAndDepthRoundtrip) {
  const fs::path dir = scratch("png");
  const int w = 7, h = 5;
  std::vector<Vec3> color;
  std::vector<double> depth;
  for (int i = 0; i < w * h; ++i) {
    color.emplace_back(i / 255.0, (3 * i % 256) / 255.0, 1.0);
    depth.push_back(i % 4 == 0 ? 0.0 : 0.3 + 0.0002 * (17 * i));
  }
  write_color_png(dir / "c.png", w, h, color);
  write_depth_png(dir / "d.png", w, h, depth, 1.0 / 5000);
  int cw = 0, ch = 0, dw = 0, dh = 0;
  const auto c = read_color_png(dir / "c.png", cw, ch);
  const auto d = read_depth_png(dir / "d.png", 1.0 / 5000, dw, dh);
  ASSERT_EQ(cw, w);
  ASSERT_EQ(dh, h);
  for (int i = 0; i < w * h; ++i) {
    EXPECT_LT((c[i] - color[i]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(d[i], depth[i], 1e-9);
  }
}

TEST(PngIo, MissingFile) {
  int w, h;
  EXPECT_EQ(code_of([&] { read_color_png("/nonexistent.png", w, h); }), Errc::MissingFile);
}

TEST(IntrinsicsIo, Roundtrip) {
  const Intrinsics k{525.0, 524.5, 319.5, 239.25, 640, 480, 1.0 / 1000};
  const fs::path f = scratch("intr") / "i.txt";
  write_intrinsics(f, k);
  const Intrinsics r = read_intrinsics(f);
  EXPECT_EQ(r.fx, k.fx);
  EXPECT_EQ(r.fy, k.fy);
  EXPECT_EQ(r.cx, k.cx);
  EXPECT_EQ(r.cy, k.cy);
  EXPECT_EQ(r.width, k.width);
  EXPECT_EQ(r.height, k.height);
  EXPECT_DOUBLE_EQ(r.depth_scale, k.depth_scale);
}

TEST(SceneRender, HeadOnWallDepth) {
  // Identity camera looks along +z at the wall z = 2.
  SynthConfig cfg;
  const Intrinsics k = cfg.intrinsics();
  const RenderedView v = render_view(empty_room(), k, Pose::identity(), 6.0);
  for (int y = 20; y < 40; ++y)
    for (int x = 30; x < 50; ++x) EXPECT_NEAR(v.depth[y * k.width + x], 2.0, 1e-4);
  const RenderedView near = render_view(empty_room(), k, Pose::identity(), 1.5);
  EXPECT_EQ(near.depth[30 * k.width + 40], 0.0);
}

TEST(SceneRender, SdfSignAndNormals) {
  const SyntheticScene s = SyntheticScene::desk_room();
  EXPECT_GT(s.sdf(Vec3::Zero()), 0.05);
  EXPECT_LT(s.sdf(Vec3(0, 0, 3)), 0.0);  // behind the far wall
  EXPECT_NEAR(s.sdf(Vec3(0, 0, 1.9)), 0.1, 1e-9);
  EXPECT_LT((s.normal(Vec3(0, 0, 1.9)) - Vec3(0, 0, -1)).norm(), 1e-4);
}

TEST(Synthetic, OrbitStartsAtIdentityAndStaysInside) {
  SynthConfig cfg;
  const auto poses = orbit_trajectory(cfg);
  ASSERT_EQ(poses.size(), std::size_t(cfg.n_frames));
  EXPECT_LT((poses[0].matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  const SyntheticScene s = SyntheticScene::desk_room();
  for (const Pose& p : poses) EXPECT_GT(s.sdf(p.translation()), 0.05);
}

TEST(Synthetic, DepthNoiseMatchesSigma) {
  SynthConfig cfg;
  cfg.n_frames = 2;
  cfg.width = 320;
  cfg.height = 240;
  cfg.fx = cfg.fy = 240;
  cfg.noise_sigma = 0.01;
  cfg.mesh_voxel = 0.2;
  const fs::path dir = scratch("noise");
  const SyntheticScene scene = SyntheticScene::desk_room();
  generate_synthetic(scene, cfg, dir);
  const Dataset ds = load_synthetic(dir);
  double ss = 0, sum = 0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < ds.size(); ++f) {
    const Frame fr = ds.load_frame(f);
    const RenderedView clean = render_view(scene, ds.intr, ds.gt_poses[f], cfg.far);
    for (std::size_t i = 0; i < fr.depth.size(); ++i) {
      if (!(clean.depth[i] > 0)) continue;
      const double e = fr.depth[i] - clean.depth[i];
      sum += e;
      ss += e * e;
      ++n;
    }
  }
  ASSERT_GE(n, 100000u);
  const double mean = sum / n, sd = std::sqrt(ss / n - mean * mean);
  EXPECT_LT(std::abs(mean), 5 * cfg.noise_sigma / std::sqrt(double(n)));
  EXPECT_GE(sd, 0.9 * cfg.noise_sigma);
  EXPECT_LE(sd, 1.1 * cfg.noise_sigma);
}

TEST(Synthetic, GenerationIsDeterministic) {
  SynthConfig cfg;
  cfg.n_frames = 3;
  cfg.mesh_voxel = 0.2;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  generate_synthetic(SyntheticScene::desk_room(), cfg, a);
  generate_synthetic(SyntheticScene::desk_room(), cfg, b);
  for (const char* f : {"trajectory.txt", "intrinsics.txt", "gt_mesh.ply", "frames/0002.depth.png",
                        "frames/0002.color.png"}) {
    EXPECT_EQ(file_bytes(a / f), file_bytes(b / f)) << f;
  }
  cfg.seed = 1;
  const fs::path c = scratch("det_c");
  generate_synthetic(SyntheticScene::desk_room(), cfg, c);
  EXPECT_NE(file_bytes(a / "frames/0002.depth.png"), file_bytes(c / "frames/0002.depth.png"));
  EXPECT_EQ(file_bytes(a / "frames/0002.color.png"), file_bytes(c / "frames/0002.color.png"));
}

TEST(Synthetic, LoadedFramesMatchTheLayout) {
  SynthConfig cfg;
  cfg.n_frames = 2;
  cfg.mesh_voxel = 0.2;
  const fs::path dir = scratch("layout");
  generate_synthetic(SyntheticScene::desk_room(), cfg, dir);
  const Dataset ds = load_synthetic(dir);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_TRUE(ds.has_ground_truth());
  EXPECT_NEAR(ds.frames[1].timestamp, 1.0 / cfg.frame_rate, 1e-6);  // microsecond stamps
  const Frame f = ds.load_frame(0);
  EXPECT_EQ(f.intr.width, cfg.width);
  EXPECT_EQ(f.depth.size(), std::size_t(cfg.width * cfg.height));
  // frame_ray carries the observed depth as a range.
  const Ray r = frame_ray(f, ds.gt_poses[0], 3, 4);
  ASSERT_TRUE(f.depth_at(3, 4).has_value());
  ASSERT_TRUE(r.gt_depth.has_value());
  EXPECT_NEAR(*r.gt_depth, depth_to_range(f.intr, 3, 4, *f.depth_at(3, 4)), 1e-12);
}

TEST(Synthetic, ErrorCases) {
  EXPECT_EQ(code_of([] { load_synthetic("/nonexistent/synth"); }), Errc::MissingFile);
  SyntheticScene blocked = SyntheticScene::desk_room();
  Primitive ball;
  ball.kind = Primitive::Kind::Sphere;
  ball.half = Vec3::Constant(0.3);
  blocked.primitives.push_back(ball);  // encloses the first camera
  SynthConfig cfg;
  cfg.n_frames = 2;
  EXPECT_EQ(code_of([&] { generate_synthetic(blocked, cfg, scratch("blocked")); }), Errc::CameraInsideGeometry);
  cfg.width = 8;
  EXPECT_EQ(code_of([&] { generate_synthetic(SyntheticScene::desk_room(), cfg, scratch("tiny")); }),
            Errc::ConfigError);
}
