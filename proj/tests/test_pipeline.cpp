#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "nslam/config.hpp"
#include "nslam/error.hpp"
#include "nslam/pipeline.hpp"

using namespace nslam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nslam_pipeline_" + name);
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

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NSLAM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_yaml(const std::string& name, const std::string& body) {
  const fs::path f = scratch(name) / "config.yaml";
  std::ofstream(f) << body;
  return f;
}

// Tiny benchmark: 6 frames at 32x24, short schedules.
fs::path tiny_benchmark(const std::string& name) {
  const fs::path dir = scratch(name);
  SynthConfig sc;
  sc.n_frames = 6;
  sc.width = 32;
  sc.height = 24;
  sc.fx = sc.fy = 24;
  sc.mesh_voxel = 0.2;
  write_synthetic_benchmark(SyntheticScene::desk_room(), sc, dir);
  RunConfig cfg = load_run_config(dir / "config.yaml");
  cfg.dataset_path = ".";
  cfg.output_dir = "output";
  cfg.mapping.first_frame_iters = 10;
  cfg.mapping.ba_iters = 4;
  cfg.mapping.k_m = 2;
  cfg.mapping.map_every = 3;
  cfg.tracking.iters = 3;
  cfg.tracking.n_t = 64;
  cfg.mapping.n_g = 128;
  cfg.mesh_voxel = 0.25;
  save_run_config(cfg, dir / "config.yaml");
  return dir;
}

}  // namespace

TEST(RunConfigYaml, EmptyFileKeepsDefaultsButNeedsADataset) {
  EXPECT_EQ(code_of([] { load_run_config(write_yaml("empty", "{}\n")); }), Errc::ConfigError);
  const fs::path f = write_yaml("minimal", "dataset:\n  path: data\n");
  const RunConfig c = load_run_config(f);
  const RunConfig d;
  EXPECT_EQ(c.dataset_path, f.parent_path() / "data");
  EXPECT_EQ(c.output_dir, f.parent_path() / "output");
  EXPECT_EQ(c.tracking.iters, d.tracking.iters);
  EXPECT_EQ(c.tracking.lr_pose, d.tracking.lr_pose);
  EXPECT_EQ(c.mapping.k_m, d.mapping.k_m);
  EXPECT_EQ(c.weights.sdf, d.weights.sdf);
  EXPECT_EQ(c.grid_table_log2, d.grid_table_log2);
  EXPECT_EQ(c.mapping.mode, BaMode::Global);
}

TEST(RunConfigYaml, SaveLoadRoundtrip) {
  const fs::path dir = scratch("roundtrip");
  RunConfig c;
  c.dataset_path = dir / "seq";
  c.output_dir = dir / "out";
  c.format = DatasetFormat::Tum;
  c.tum_intrinsics = Intrinsics{517.3, 516.5, 318.6, 255.3, 640, 480, 1.0 / 5000};
  c.frame_start = 3;
  c.frame_end = 40;
  c.frame_stride = 2;
  c.seed = 42;
  c.bounds = SceneBounds{Vec3(-1.5, -0.25, 0.125), Vec3(2.5, 1.75, 3.0625)};
  c.grid_levels = 12;
  c.grid_table_log2 = 15;
  c.hidden_width = 48;
  c.sampling.m_c = 24;
  c.sampling.tr = 0.08;
  c.weights.fs = 7.5;
  c.tracking.n_t = 512;
  c.tracking.iters = 13;
  c.mapping.mode = BaMode::Local;
  c.mapping.local_window = 7;
  c.mapping.k_m = 3;
  c.mapping.optimize_poses = false;
  c.save_mesh = false;
  c.mesh_voxel = 0.03;
  save_run_config(c, dir / "c.yaml");
  const RunConfig r = load_run_config(dir / "c.yaml");
  EXPECT_EQ(r.dataset_path, c.dataset_path);
  EXPECT_EQ(r.output_dir, c.output_dir);
  EXPECT_EQ(r.format, DatasetFormat::Tum);
  EXPECT_EQ(r.tum_intrinsics.fx, 517.3);
  EXPECT_EQ(r.tum_intrinsics.height, 480);
  EXPECT_EQ(r.frame_start, 3);
  EXPECT_EQ(r.frame_end, 40);
  EXPECT_EQ(r.frame_stride, 2);
  EXPECT_EQ(r.seed, 42u);
  EXPECT_EQ(r.bounds.min, c.bounds.min);
  EXPECT_EQ(r.bounds.max, c.bounds.max);
  EXPECT_EQ(r.grid_levels, 12);
  EXPECT_EQ(r.grid_table_log2, 15);
  EXPECT_EQ(r.hidden_width, 48);
  EXPECT_EQ(r.sampling.m_c, 24);
  EXPECT_EQ(r.sampling.tr, 0.08);
  EXPECT_EQ(r.weights.fs, 7.5);
  EXPECT_EQ(r.tracking.n_t, 512);
  EXPECT_EQ(r.tracking.iters, 13);
  EXPECT_EQ(r.mapping.mode, BaMode::Local);
  EXPECT_EQ(r.mapping.local_window, 7);
  EXPECT_EQ(r.mapping.k_m, 3);
  EXPECT_FALSE(r.mapping.optimize_poses);
  EXPECT_FALSE(r.save_mesh);
  EXPECT_EQ(r.mesh_voxel, 0.03);
}

TEST(RunConfigYaml, BaModeStrings) {
  for (BaMode m : {BaMode::Global, BaMode::Local, BaMode::None}) EXPECT_EQ(ba_mode_from_string(to_string(m)), m);
  EXPECT_EQ(code_of([] { ba_mode_from_string("Global"); }), Errc::ConfigError);
}

TEST(RunConfigYaml, InvalidValuesAreRejected) {
  const std::vector<std::string> bad = {
      "dataset: {path: d}\nbounds: {min: [0, 0, 0], max: [1, -1, 1]}\n",
      "dataset: {path: d}\nbounds: {min: [0, 0]}\n",
      "dataset: {path: d, format: kitti}\n",
      "dataset: {path: d, format: tum}\n",
      "dataset: {path: d, frame_stride: 0}\n",
      "dataset: {path: d}\ntracking: {iters: -1}\n",
      "dataset: {path: d}\ntracking: {n_t: many}\n",
      "dataset: {path: d}\nmapping: {mode: sometimes}\n",
      "dataset: {path: d}\nmapping: {k_m: 0}\n",
      "dataset: {path: d}\nloss: {sdf: -1}\n",
      "dataset: {path: d}\ngrid: {finest_voxel: 0}\n",
      "dataset: [unclosed\n",
  };
  for (std::size_t i = 0; i < bad.size(); ++i) {
    EXPECT_EQ(code_of([&] { load_run_config(write_yaml("bad" + std::to_string(i), bad[i])); }), Errc::ConfigError)
        << bad[i];
  }
  EXPECT_EQ(code_of([] { load_run_config("/nonexistent/config.yaml"); }), Errc::MissingFile);
}

TEST(Pipeline, MissingDatasetIsADatasetError) {
  RunConfig c;
  c.dataset_path = "/nonexistent/dataset";
  EXPECT_EQ(code_of([&] { open_dataset(c); }), Errc::DatasetError);
  const fs::path f = write_yaml("missing_ds", "dataset:\n  path: /nonexistent/dataset\n");
  EXPECT_EQ(run_cli("run -q " + f.string()), 2);
  EXPECT_EQ(run_cli("run -q /nonexistent/config.yaml"), 2);
}

TEST(Pipeline, SyntheticConfigMatchesTheRoom) {
  const SyntheticScene scene = SyntheticScene::desk_room();
  const RunConfig c = synthetic_run_config(scene);
  EXPECT_EQ(c.tracking.n_t, 256);
  EXPECT_EQ(c.mapping.n_g, 512);
  EXPECT_LT((c.bounds.min - (scene.room_bounds().min - Vec3::Constant(0.1))).norm(), 1e-12);
  EXPECT_LT((c.bounds.max - (scene.room_bounds().max + Vec3::Constant(0.1))).norm(), 1e-12);
  EXPECT_NO_THROW(c.validate());
}

TEST(Pipeline, ShortRunWritesOutputsAndIsDeterministic) {
  const fs::path dir = tiny_benchmark("run");
  const RunConfig cfg = load_run_config(dir / "config.yaml");
  const RunResult res = run_slam(cfg);
  ASSERT_EQ(res.trajectory.size(), 6u);
  EXPECT_EQ(res.trajectory[0].pose.xi, Vec6::Zero());
  EXPECT_EQ(res.db.frame_ids(), (std::vector<int>{0, 3}));
  for (const char* f : {"trajectory.txt", "metrics.jsonl", "checkpoint.bin", "keyframes.txt", "mesh.ply"}) {
    EXPECT_TRUE(fs::exists(cfg.output_dir / f)) << f;
  }
  EXPECT_EQ(read_trajectory(res.trajectory_file).size(), 6u);
  std::ifstream log(cfg.output_dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    EXPECT_EQ(line.front(), '{');
    EXPECT_EQ(line.back(), '}');
  }
  EXPECT_GT(lines, 0);

  const std::string first = file_bytes(res.trajectory_file);
  fs::remove_all(cfg.output_dir);
  const RunResult again = run_slam(cfg);
  EXPECT_EQ(file_bytes(again.trajectory_file), first);
}

TEST(Pipeline, FrameRangeAndStride) {
  const fs::path dir = tiny_benchmark("range");
  RunConfig cfg = load_run_config(dir / "config.yaml");
  cfg.frame_start = 1;
  cfg.frame_stride = 2;
  cfg.save_mesh = cfg.save_checkpoint = cfg.save_keyframes = cfg.metrics_log = false;
  const RunResult res = run_slam(cfg);
  EXPECT_EQ(res.frame_indices, (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_FALSE(fs::exists(cfg.output_dir / "mesh.ply"));
  cfg.frame_start = 10;
  EXPECT_EQ(code_of([&] { run_slam(cfg); }), Errc::DatasetError);
}

TEST(Cli, SubcommandsRoundTrip) {
  const fs::path dir = scratch("cli");
  ASSERT_EQ(run_cli("synth " + (dir / "data").string() + " --frames 3 --mesh-voxel 0.2"), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "config.yaml"));
  const fs::path gt = dir / "data" / "trajectory.txt";
  EXPECT_EQ(run_cli("eval-ate " + gt.string() + " " + gt.string()), 0);
  const fs::path mesh = dir / "data" / "gt_mesh.ply";
  EXPECT_EQ(run_cli("eval-mesh " + mesh.string() + " " + mesh.string() + " --samples 2000"), 0);
  EXPECT_EQ(run_cli("eval-ate /nonexistent/a.txt " + gt.string()), 2);
  EXPECT_NE(run_cli("frobnicate"), 0);
}
