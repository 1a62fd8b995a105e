#include "nslam/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nslam/error.hpp"

namespace nslam {

void SamplingConfig::validate() const {
  if (!(near < far) || m_c < 1 || m_f < 0 || !(d_s > 0) || !(tr > 0)) {
    throw Error(Errc::ConfigError, "invalid sampling configuration");
  }
}

std::optional<std::pair<double, double>> ray_box_interval(const Ray& ray, const SceneBounds& bounds) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < bounds.min[a] || o > bounds.max[a]) return std::nullopt;
      continue;
    }
    double ta = (bounds.min[a] - o) / d;
    double tb = (bounds.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 < t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::vector<double> sample_ray(const Ray& ray, const SamplingConfig& cfg, std::mt19937_64& rng,
                               const SceneBounds* clip) {
  double near = cfg.near, far = cfg.far;
  if (clip) {
    const auto span = ray_box_interval(ray, *clip);
    if (!span) return {};
    // Pull the ends in slightly so rounding never leaves the box.
    const double pad = 1e-9 * (1.0 + std::abs(span->second));
    near = std::max(near, span->first + pad);
    far = std::min(far, span->second - pad);
    if (!(near < far)) return {};
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> t;
  t.reserve(cfg.m_c + cfg.m_f);
  const double step = (far - near) / cfg.m_c;
  for (int i = 0; i < cfg.m_c; ++i) t.push_back(near + (i + unit(rng)) * step);
  if (ray.gt_depth && cfg.m_f > 0) {
    const double d = *ray.gt_depth;
    const double fstep = 2.0 * cfg.d_s / cfg.m_f;
    for (int i = 0; i < cfg.m_f; ++i) {
      t.push_back(std::clamp(d - cfg.d_s + (i + unit(rng)) * fstep, near, far));
    }
  }
  std::sort(t.begin(), t.end());
  return t;
}

double sdf_to_weight(double s, double tr) {
  const double z = s / tr;
  const double a = 1.0 / (1.0 + std::exp(-z));
  const double b = 1.0 / (1.0 + std::exp(z));
  return a * b;
}

double sdf_to_weight_grad(double s, double tr) {
  const double z = s / tr;
  const double a = 1.0 / (1.0 + std::exp(-z));
  const double b = 1.0 / (1.0 + std::exp(z));
  // d/dz [a b] = a b (b - a)
  return a * b * (b - a) / tr;
}

RenderBatch render_with_depths(std::span<const Ray> rays, std::vector<std::vector<double>> depths,
                               const SceneParams& params, double tr) {
  RenderBatch batch;
  batch.tr = tr;
  batch.rays.assign(rays.begin(), rays.end());
  batch.offset.assign(rays.size() + 1, 0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    batch.offset[r + 1] = batch.offset[r] + depths[r].size();
  }
  const std::size_t n = batch.offset.back();
  batch.t.reserve(n);
  batch.x.reserve(n);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : depths[r]) {
      batch.t.push_back(t);
      batch.x.push_back(rays[r].origin + t * rays[r].direction);
    }
  }
  FieldBatch fb = field_forward(params, batch.x, &batch.tape);
  batch.sdf = std::move(fb.sdf);
  batch.color = std::move(fb.color);

  batch.weight.resize(n);
  batch.color_hat.assign(rays.size(), Vec3::Zero());
  batch.depth_hat.assign(rays.size(), 0.0);
  batch.weight_sum.assign(rays.size(), 0.0);
  batch.degenerate.assign(rays.size(), 0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    double wsum = 0;
    Vec3 c = Vec3::Zero();
    double d = 0;
    for (std::size_t i = batch.offset[r]; i < batch.offset[r + 1]; ++i) {
      const double w = sdf_to_weight(batch.sdf[i], tr);
      batch.weight[i] = w;
      wsum += w;
      c += w * batch.color.row(i).transpose();
      d += w * batch.t[i];
    }
    batch.weight_sum[r] = wsum;
    if (wsum < kDegenerateWeightSum) {
      batch.degenerate[r] = 1;
      continue;
    }
    batch.color_hat[r] = c / wsum;
    batch.depth_hat[r] = d / wsum;
  }
  return batch;
}

RenderBatch render(std::span<const Ray> rays, const SceneParams& params, const SamplingConfig& cfg,
                   std::mt19937_64& rng) {
  std::vector<std::vector<double>> depths(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) depths[r] = sample_ray(rays[r], cfg, rng, &params.bounds);
  return render_with_depths(rays, std::move(depths), params, cfg.tr);
}

RenderSeed RenderSeed::zeros(const RenderBatch& batch) {
  RenderSeed s;
  s.color_hat.assign(batch.n_rays(), Vec3::Zero());
  s.depth_hat.assign(batch.n_rays(), 0.0);
  s.sdf.assign(batch.n_samples(), 0.0);
  return s;
}

void render_backward(const SceneParams& params, const RenderBatch& batch, const RenderSeed& seed,
                     const RenderGrads& out) {
  const std::size_t n = batch.n_samples();
  if (seed.color_hat.size() != batch.n_rays() || seed.depth_hat.size() != batch.n_rays() ||
      seed.sdf.size() != n) {
    throw Error(Errc::TapeMismatch, "render seed does not match the batch");
  }
  std::vector<double> g_sdf(seed.sdf);
  RowMat g_color = RowMat::Zero(static_cast<Eigen::Index>(n), 3);
  for (std::size_t r = 0; r < batch.n_rays(); ++r) {
    if (batch.degenerate[r]) continue;
    const double inv_w = 1.0 / batch.weight_sum[r];
    const Vec3& gc = seed.color_hat[r];
    const double gd = seed.depth_hat[r];
    for (std::size_t i = batch.offset[r]; i < batch.offset[r + 1]; ++i) {
      const Vec3 ci = batch.color.row(i).transpose();
      const double gw = (gc.dot(ci - batch.color_hat[r]) + gd * (batch.t[i] - batch.depth_hat[r])) * inv_w;
      g_sdf[i] += gw * sdf_to_weight_grad(batch.sdf[i], batch.tr);
      g_color.row(i) = (batch.weight[i] * inv_w) * gc.transpose();
    }
  }
  std::vector<Vec3> gx;
  BackwardRequest req;
  req.param_grads = out.params;
  req.x_grads = out.pose ? &gx : nullptr;
  field_backward(params, batch.tape, g_sdf, g_color, req);
  if (out.pose) {
    // Left perturbation moves every sample as a world point: dx = rho + omega x x.
    out.pose->assign(batch.n_rays(), Vec6::Zero());
    for (std::size_t r = 0; r < batch.n_rays(); ++r) {
      Vec6& g = (*out.pose)[r];
      for (std::size_t i = batch.offset[r]; i < batch.offset[r + 1]; ++i) {
        g.head<3>() += gx[i];
        g.tail<3>() += batch.x[i].cross(gx[i]);
      }
    }
  }
}

}  // namespace nslam
