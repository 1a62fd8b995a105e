#include "nslam/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "nslam/objectives.hpp"

namespace nslam {

bool GradientSuiteReport::passed(double tol) const {
  if (cases.empty()) return false;
  for (const GradientCase& c : cases) {
    if (c.report.checked == 0 || !(c.report.max_rel_error < tol)) return false;
  }
  return true;
}

namespace {

constexpr std::uint64_t kSmoothSeed = 99;
constexpr int kSmoothRegion = 4;

struct Problem {
  SceneParams params;
  Intrinsics intr;
  Pose pose;
  std::vector<Pixel> pixels;
  std::vector<Vec3> colors;
  std::vector<std::optional<double>> depths;  // ranges
  std::vector<std::vector<double>> samples;
  double tr = 0.1;

  std::vector<Ray> rays(const Pose& p) const {
    std::vector<Ray> out;
    for (std::size_t r = 0; r < pixels.size(); ++r) {
      Ray ray = pixel_to_ray(intr, p, pixels[r].u, pixels[r].v);
      ray.gt_color = colors[r];
      ray.gt_depth = depths[r];
      out.push_back(ray);
    }
    return out;
  }

  GradProbe eval(const Pose& p, const LossWeights& w, SceneGrads* grads = nullptr,
                 std::vector<Vec6>* pose_grads = nullptr) const {
    const RenderBatch batch = render_with_depths(rays(p), samples, params, tr);
    std::mt19937_64 rng(kSmoothSeed);
    const LossReport rep = total_loss(batch, params, w, rng, kSmoothRegion, LossGrads{grads, pose_grads});
    std::uint64_t sig = field_signature(params, batch.tape);
    for (char d : batch.degenerate) sig = sig * 31 + std::uint64_t(d);
    return {rep.total, sig};
  }
};

Problem make_problem(const GradientSuiteOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Problem pb;
  FieldConfig fc;
  fc.grid.levels = 6;
  fc.grid.r_min = 4;
  fc.grid.r_max = 40;
  fc.grid.table_size_log2 = 10;
  fc.grid_init_scale = 0.1;
  fc.sdf_bias_init = pb.tr;
  const SceneBounds bounds{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  pb.params = SceneParams::create(fc, bounds, rng);

  pb.intr = Intrinsics{20, 20, 9.5, 9.5, 20, 20, 1.0 / 5000};
  Vec6 xi;
  for (int k = 0; k < 6; ++k) xi[k] = 0.2 * (unit(rng) - 0.5);
  pb.pose = Pose{xi};
  SamplingConfig sc;
  sc.m_c = 16;
  sc.m_f = 6;
  sc.near = 0.05;
  sc.far = 0.75;
  sc.tr = pb.tr;
  sc.d_s = 0.25 * pb.tr;
  std::uniform_int_distribution<int> pix(0, 19);
  for (int r = 0; r < opts.n_rays; ++r) {
    pb.pixels.push_back({pix(rng), pix(rng)});
    pb.colors.emplace_back(unit(rng), unit(rng), unit(rng));
    pb.depths.push_back(r % 5 == 4 ? std::nullopt : std::optional<double>(0.2 + 0.5 * unit(rng)));
  }
  const std::vector<Ray> rays = pb.rays(pb.pose);
  for (const Ray& ray : rays) pb.samples.push_back(sample_ray(ray, sc, rng));
  return pb;
}

// Picks up to n coordinates with a nonzero analytic gradient plus a few others.
std::vector<std::size_t> pick(std::span<const double> analytic, int n, std::mt19937_64& rng) {
  std::vector<std::size_t> nz, z;
  for (std::size_t i = 0; i < analytic.size(); ++i) (analytic[i] != 0.0 ? nz : z).push_back(i);
  std::shuffle(nz.begin(), nz.end(), rng);
  std::shuffle(z.begin(), z.end(), rng);
  nz.resize(std::min<std::size_t>(nz.size(), n));
  z.resize(std::min<std::size_t>(z.size(), std::max(1, n / 10)));
  nz.insert(nz.end(), z.begin(), z.end());
  std::sort(nz.begin(), nz.end());
  return nz;
}

void merge(GradCheckReport& into, const GradCheckReport& r) {
  into.checked += r.checked;
  into.skipped_nonsmooth += r.skipped_nonsmooth;
  into.max_abs_error = std::max(into.max_abs_error, r.max_abs_error);
  if (r.max_rel_error > into.max_rel_error) {
    into.max_rel_error = r.max_rel_error;
    into.worst_index = r.worst_index;
  }
}

}  // namespace

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Problem pb = make_problem(opts);
  std::mt19937_64 rng(opts.seed + 1);

  const std::vector<std::pair<std::string, LossWeights>> terms = {
      {"rgb", {1, 0, 0, 0, 0}}, {"depth", {0, 1, 0, 0, 0}}, {"sdf", {0, 0, 1, 0, 0}},
      {"fs", {0, 0, 0, 1, 0}},  {"smooth", {0, 0, 0, 0, 1}}, {"total", LossWeights{}}};

  GradientSuiteReport out;
  for (const auto& [name, w] : terms) {
    SceneGrads g = SceneGrads::zeros_like(pb.params);
    std::vector<Vec6> ray_pose;
    pb.eval(pb.pose, w, &g, &ray_pose);
    const auto probe = [&](std::span<const double>) { return pb.eval(pb.pose, w); };

    // Scene parameters, block by block: [grid | geo layers | color layers].
    const auto pblocks = pb.params.blocks();
    const auto gblocks = std::as_const(g).blocks();
    const std::size_t n_geo = 2 * pb.params.geo.layers.size();
    GradCheckReport grid_rep, geo_rep, color_rep;
    for (std::size_t b = 0; b < pblocks.size(); ++b) {
      const int quota = b == 0 ? opts.coords_per_group : opts.coords_per_group / int(n_geo);
      const auto idx = pick(gblocks[b], quota, rng);
      const GradCheckReport r = check_gradients(probe, pblocks[b], gblocks[b], opts.h, idx);
      merge(b == 0 ? grid_rep : (b <= n_geo ? geo_rep : color_rep), r);
    }
    out.cases.push_back({name, "grid", grid_rep});
    out.cases.push_back({name, "geo", geo_rep});
    out.cases.push_back({name, "color", color_rep});

    // Camera twist shared by all rays, left perturbation.
    if (name != "smooth") {
      Vec6 analytic = Vec6::Zero();
      for (const Vec6& v : ray_pose) analytic += v;
      Vec6 delta = Vec6::Zero();
      const auto pose_probe = [&](std::span<const double> d) {
        Vec6 dv;
        for (int k = 0; k < 6; ++k) dv[k] = d[k];
        return pb.eval(retract_left(pb.pose, dv), w);
      };
      const GradCheckReport r = check_gradients(pose_probe, std::span<double>(delta.data(), 6),
                                                std::span<const double>(analytic.data(), 6), opts.h);
      out.cases.push_back({name, "pose", r});
    }
  }
  for (const GradientCase& c : out.cases) out.max_rel_error = std::max(out.max_rel_error, c.report.max_rel_error);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace nslam
