// Command-line entry point: run, mesh, eval-mesh, eval-ate, synth, check-grad.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "nslam/config.hpp"
#include "nslam/diagnostics.hpp"
#include "nslam/error.hpp"
#include "nslam/meshing.hpp"
#include "nslam/metrics.hpp"
#include "nslam/pipeline.hpp"
#include "nslam/synthetic.hpp"

namespace fs = std::filesystem;
using namespace nslam;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingInput = 2;

// Inward-looking cameras on a sphere (Fibonacci lattice).
std::vector<Pose> sphere_views(const Vec3& center, double radius, int n) {
  std::vector<Pose> out;
  const double golden = std::acos(-1.0) * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - y * y);
    const Vec3 dir(std::cos(golden * i) * r, y, std::sin(golden * i) * r);
    const Vec3 c = center + radius * dir;
    const Vec3 z = -dir;
    Vec3 helper = std::abs(z.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    const Vec3 x = helper.cross(z).normalized();
    const Vec3 yv = z.cross(x);
    Mat4 T = Mat4::Identity();
    T.block<3, 1>(0, 0) = x;
    T.block<3, 1>(0, 1) = yv;
    T.block<3, 1>(0, 2) = z;
    T.topRightCorner<3, 1>() = c;
    out.push_back(Pose::from_matrix(T));
  }
  return out;
}

SceneBounds mesh_box(const TriangleMesh& m) {
  SceneBounds b{Vec3::Constant(std::numeric_limits<double>::infinity()),
                Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const Vec3& v : m.vertices) {
    b.min = b.min.cwiseMin(v);
    b.max = b.max.cwiseMax(v);
  }
  return b;
}

int cmd_run(const std::string& config, bool quiet) {
  const RunConfig cfg = load_run_config(config);
  const RunResult res = run_slam(cfg, quiet ? nullptr : &std::cerr);
  std::cout << "trajectory " << res.trajectory_file.string() << "\n";
  if (!res.mesh_file.empty()) std::cout << "mesh " << res.mesh_file.string() << "\n";
  if (!res.checkpoint_file.empty()) std::cout << "checkpoint " << res.checkpoint_file.string() << "\n";
  std::cout << "frames " << res.trajectory.size() << "\ndiverged_frames " << res.diverged_frames << "\nseconds "
            << res.seconds << "\n";
  return 0;
}

int cmd_mesh(const std::string& ckpt, const std::string& out, double voxel) {
  const SceneParams params = load_checkpoint(ckpt);
  const TriangleMesh mesh = extract_mesh(params, params.bounds, voxel);
  write_ply(out, mesh);
  std::cout << "vertices " << mesh.vertices.size() << "\ntriangles " << mesh.triangles.size() << "\n";
  return 0;
}

struct EvalMeshArgs {
  std::string pred, gt, cull = "none", dataset, traj, intrinsics, report;
  int virtual_views = 20;
  double virtual_radius = 1.0;
  std::size_t samples = 200000;
  double threshold = 0.05;
  int depth_views = 0;
  double depth_cube_half = 0.5;
  double tolerance = 0.03;
  std::uint64_t seed = 0;
};

int cmd_eval_mesh(const EvalMeshArgs& a) {
  TriangleMesh pred = read_ply(a.pred);
  TriangleMesh gt = read_ply(a.gt);
  EvalReport rep;
  std::mt19937_64 rng(a.seed);
  if (a.depth_views > 0) {
    const SceneBounds box = mesh_box(gt);
    const Vec3 c = 0.5 * (box.min + box.max);
    const SceneBounds cube{c - Vec3::Constant(a.depth_cube_half), c + Vec3::Constant(a.depth_cube_half)};
    Intrinsics k{60, 60, 39.5, 29.5, 80, 60, 1.0 / 5000};
    if (!a.intrinsics.empty()) k = read_intrinsics(a.intrinsics);
    else if (!a.dataset.empty()) k = read_intrinsics(fs::path(a.dataset) / "intrinsics.txt");
    const DepthL1Result d = depth_l1(pred, gt, random_views_in_box(cube, a.depth_views, rng), k);
    rep.depth_l1_cm = 100.0 * d.depth_l1;
  }
  if (a.cull != "none") {
    CullOptions opts;
    if (a.cull == "frustum") opts.strategy = CullStrategy::Frustum;
    else if (a.cull == "occlusion") opts.strategy = CullStrategy::FrustumOcclusion;
    else if (a.cull == "virtual") opts.strategy = CullStrategy::VirtualView;
    else throw Error(Errc::ConfigError, "--cull must be none, frustum, occlusion or virtual");
    const fs::path traj = !a.traj.empty() ? fs::path(a.traj) : fs::path(a.dataset) / "trajectory.txt";
    const fs::path intr = !a.intrinsics.empty() ? fs::path(a.intrinsics) : fs::path(a.dataset) / "intrinsics.txt";
    if (a.traj.empty() && a.dataset.empty()) throw Error(Errc::ConfigError, "culling needs --dataset or --traj");
    for (const auto& p : read_trajectory(traj)) opts.views.push_back(p.pose);
    opts.intr = read_intrinsics(intr);
    opts.depth_tolerance = a.tolerance;
    if (opts.strategy == CullStrategy::VirtualView) {
      const SceneBounds box = mesh_box(gt);
      opts.virtual_views = sphere_views(0.5 * (box.min + box.max), a.virtual_radius, a.virtual_views);
    }
    pred = cull_mesh(pred, opts);
    gt = cull_mesh(gt, opts);
  }
  const MeshMetrics m = mesh_metrics(pred, gt, a.samples, a.threshold, a.seed);
  rep.accuracy_cm = 100.0 * m.accuracy;
  rep.completion_cm = 100.0 * m.completion;
  rep.completion_ratio = m.completion_ratio;
  std::cout << rep.to_text();
  if (!a.report.empty()) std::ofstream(a.report) << rep.to_text();
  return 0;
}

int cmd_eval_ate(const std::string& pred, const std::string& gt, bool no_align) {
  const auto p = read_trajectory(pred);
  const auto g = read_trajectory(gt);
  std::printf("ate_rmse_cm %.6f\n", 100.0 * ate_rmse(p, g, !no_align));
  return 0;
}

int cmd_synth(const fs::path& out, const SynthConfig& sc) {
  write_synthetic_benchmark(SyntheticScene::desk_room(), sc, out);
  std::cout << "dataset " << out.string() << "\nconfig " << (out / "config.yaml").string() << "\n";
  return 0;
}

int cmd_check_grad(std::uint64_t seed) {
  GradientSuiteOptions opts;
  opts.seed = seed;
  const GradientSuiteReport rep = run_gradient_suite(opts);
  std::printf("%-8s %-6s %12s %8s %8s\n", "term", "group", "max_rel_err", "checked", "skipped");
  for (const auto& c : rep.cases) {
    std::printf("%-8s %-6s %12.3e %8zu %8zu\n", c.term.c_str(), c.group.c_str(), c.report.max_rel_error,
                c.report.checked, c.report.skipped_nonsmooth);
  }
  const bool ok = rep.passed(1e-4);
  std::printf("%s max relative error %.3e in %.2f s\n", ok ? "PASS" : "FAIL", rep.max_rel_error, rep.seconds);
  return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural implicit RGB-D SLAM"};
  app.require_subcommand(1);

  std::string run_config;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run SLAM on the dataset named by a YAML config");
  run->add_option("config", run_config, "Run configuration file")->required();
  run->add_flag("-q,--quiet", quiet, "No per-frame progress");

  std::string ckpt, mesh_out;
  double voxel = 0.02;
  auto* mesh = app.add_subcommand("mesh", "Extract a mesh from a checkpoint");
  mesh->add_option("checkpoint", ckpt)->required();
  mesh->add_option("out", mesh_out, "Output PLY")->required();
  mesh->add_option("--voxel", voxel, "Marching-cubes voxel size in meters");

  EvalMeshArgs em;
  auto* evm = app.add_subcommand("eval-mesh", "Accuracy / completion / completion ratio between two meshes");
  evm->add_option("pred", em.pred)->required();
  evm->add_option("gt", em.gt)->required();
  evm->add_option("--cull", em.cull, "none | frustum | occlusion | virtual");
  evm->add_option("--dataset", em.dataset, "Synthetic dataset dir (trajectory.txt + intrinsics.txt)");
  evm->add_option("--traj", em.traj, "Camera trajectory used for culling");
  evm->add_option("--intrinsics", em.intrinsics, "Intrinsics file used for culling and depth renders");
  evm->add_option("--virtual-views", em.virtual_views, "Extra inward-looking views for --cull virtual");
  evm->add_option("--virtual-radius", em.virtual_radius, "Radius of the virtual-view sphere (m)");
  evm->add_option("--samples", em.samples, "Surface samples per mesh");
  evm->add_option("--threshold", em.threshold, "Completion-ratio threshold (m)");
  evm->add_option("--depth-views", em.depth_views, "Random views for depth L1 (0 = skip)");
  evm->add_option("--depth-cube", em.depth_cube_half, "Half size of the cube holding depth-L1 views (m)");
  evm->add_option("--tolerance", em.tolerance, "Occlusion test slack (m)");
  evm->add_option("--seed", em.seed);
  evm->add_option("--report", em.report, "Also write the report to this file");

  std::string ate_pred, ate_gt;
  bool no_align = false;
  auto* eva = app.add_subcommand("eval-ate", "ATE RMSE between two trajectory files");
  eva->add_option("pred_traj", ate_pred)->required();
  eva->add_option("gt_traj", ate_gt)->required();
  eva->add_flag("--no-align", no_align, "Skip the rigid alignment");

  std::string synth_out;
  SynthConfig sc;
  auto* syn = app.add_subcommand("synth", "Generate the synthetic room dataset and a run config");
  syn->add_option("out_dir", synth_out)->required();
  syn->add_option("--frames", sc.n_frames);
  syn->add_option("--width", sc.width);
  syn->add_option("--height", sc.height);
  syn->add_option("--noise", sc.noise_sigma, "Depth noise sigma (m)");
  syn->add_option("--seed", sc.seed);
  syn->add_option("--mesh-voxel", sc.mesh_voxel, "GT mesh voxel (m)");

  std::uint64_t grad_seed = 7;
  auto* cg = app.add_subcommand("check-grad", "Finite-difference check of every loss gradient");
  cg->add_option("--seed", grad_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, quiet);
    if (*mesh) return cmd_mesh(ckpt, mesh_out, voxel);
    if (*evm) return cmd_eval_mesh(em);
    if (*eva) return cmd_eval_ate(ate_pred, ate_gt, no_align);
    if (*syn) {
      sc.width = std::max(sc.width, 1);
      return cmd_synth(synth_out, sc);
    }
    if (*cg) return cmd_check_grad(grad_seed);
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    const bool missing = e.code() == Errc::MissingFile || e.code() == Errc::DatasetError;
    return missing ? kExitMissingInput : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
