#include "nslam/objectives.hpp"

#include <cmath>
#include <sstream>

#include "nslam/error.hpp"

namespace nslam {

void LossWeights::validate() const {
  if (rgb < 0 || depth < 0 || sdf < 0 || fs < 0 || smooth < 0) {
    throw Error(Errc::ConfigError, "loss weights must be non-negative");
  }
}

std::string LossReport::to_json_line() const {
  std::ostringstream os;
  os.precision(10);
  os << "{\"rgb\":" << rgb << ",\"depth\":" << depth << ",\"sdf\":" << sdf << ",\"fs\":" << fs
     << ",\"smooth\":" << smooth << ",\"total\":" << total << ",\"n_rays\":" << n_rays
     << ",\"n_depth_rays\":" << n_depth_rays << "}";
  return os.str();
}

SampleSet classify_sample(double observed_depth, double t, double tr) {
  const double diff = observed_depth - t;
  if (std::abs(diff) <= tr) return SampleSet::Truncation;
  if (diff > tr) return SampleSet::FreeSpace;
  return SampleSet::Excluded;
}

namespace {

struct Terms {
  double rgb = 0, depth = 0, sdf = 0, fs = 0;
  std::size_t n_color = 0, n_depth_render = 0, n_depth = 0;
};

// Evaluates the four ray terms and, if `seed` is non-null, writes their
// weighted gradients into it.
Terms ray_terms(const RenderBatch& batch, const LossWeights* w, RenderSeed* seed) {
  Terms t;
  for (std::size_t r = 0; r < batch.n_rays(); ++r) {
    const Ray& ray = batch.rays[r];
    if (!batch.degenerate[r]) {
      ++t.n_color;
      if (ray.gt_depth) ++t.n_depth_render;
    }
    if (ray.gt_depth) ++t.n_depth;
  }
  const double tr = batch.tr;
  const double inv_c = t.n_color ? 1.0 / t.n_color : 0.0;
  const double inv_dr = t.n_depth_render ? 1.0 / t.n_depth_render : 0.0;
  const double inv_d = t.n_depth ? 1.0 / t.n_depth : 0.0;

  for (std::size_t r = 0; r < batch.n_rays(); ++r) {
    const Ray& ray = batch.rays[r];
    if (!batch.degenerate[r]) {
      const Vec3 e = batch.color_hat[r] - ray.gt_color;
      t.rgb += e.squaredNorm() / 3.0 * inv_c;
      if (seed) seed->color_hat[r] = w->rgb * (2.0 / 3.0) * inv_c * e;
      if (ray.gt_depth) {
        const double de = batch.depth_hat[r] - *ray.gt_depth;
        t.depth += de * de * inv_dr;
        if (seed) seed->depth_hat[r] = w->depth * 2.0 * inv_dr * de;
      }
    }
    if (!ray.gt_depth) continue;
    const double D = *ray.gt_depth;
    std::size_t n_tr = 0, n_fs = 0;
    for (std::size_t i = batch.offset[r]; i < batch.offset[r + 1]; ++i) {
      switch (classify_sample(D, batch.t[i], tr)) {
        case SampleSet::Truncation: ++n_tr; break;
        case SampleSet::FreeSpace: ++n_fs; break;
        case SampleSet::Excluded: break;
      }
    }
    double sum_tr = 0, sum_fs = 0;
    for (std::size_t i = batch.offset[r]; i < batch.offset[r + 1]; ++i) {
      const double s = batch.sdf[i];
      switch (classify_sample(D, batch.t[i], tr)) {
        case SampleSet::Truncation: {
          const double e = s - (D - batch.t[i]);
          sum_tr += e * e;
          if (seed) seed->sdf[i] += w->sdf * 2.0 * e * inv_d / double(n_tr);
          break;
        }
        case SampleSet::FreeSpace: {
          const double e = s - tr;
          sum_fs += e * e;
          if (seed) seed->sdf[i] += w->fs * 2.0 * e * inv_d / double(n_fs);
          break;
        }
        case SampleSet::Excluded: break;
      }
    }
    if (n_tr) t.sdf += sum_tr / double(n_tr) * inv_d;
    if (n_fs) t.fs += sum_fs / double(n_fs) * inv_d;
  }
  return t;
}

}  // namespace

double loss_rgb(const RenderBatch& batch) {
  const Terms t = ray_terms(batch, nullptr, nullptr);
  if (t.n_color == 0) throw Error(Errc::EmptyBatch, "no non-degenerate rays");
  return t.rgb;
}

double loss_depth(const RenderBatch& batch, bool* no_depth_rays) {
  const Terms t = ray_terms(batch, nullptr, nullptr);
  if (no_depth_rays) *no_depth_rays = t.n_depth_render == 0;
  return t.depth;
}

double loss_sdf(const RenderBatch& batch, double tr) {
  if (tr == batch.tr) return ray_terms(batch, nullptr, nullptr).sdf;
  RenderBatch copy = batch;
  copy.tr = tr;
  return ray_terms(copy, nullptr, nullptr).sdf;
}

double loss_freespace(const RenderBatch& batch, double tr) {
  if (tr == batch.tr) return ray_terms(batch, nullptr, nullptr).fs;
  RenderBatch copy = batch;
  copy.tr = tr;
  return ray_terms(copy, nullptr, nullptr).fs;
}

LossReport total_loss(const RenderBatch& batch, const SceneParams& params, const LossWeights& weights,
                      std::mt19937_64& rng, int smooth_region, const LossGrads& grads) {
  weights.validate();
  const bool backward = grads.params || grads.pose;
  RenderSeed seed;
  if (backward) seed = RenderSeed::zeros(batch);
  const Terms t = ray_terms(batch, &weights, backward ? &seed : nullptr);

  LossReport rep;
  rep.rgb = t.rgb;
  rep.depth = t.depth;
  rep.sdf = t.sdf;
  rep.fs = t.fs;
  rep.n_rays = t.n_color;
  rep.n_depth_rays = t.n_depth;
  rep.no_depth_rays = t.n_depth_render == 0;

  if (weights.smooth > 0) {
    const SmoothnessTerm sm =
        smoothness_sample(params.grid, smooth_region, rng,
                          grads.params ? grads.params->grid.data() : nullptr, weights.smooth);
    rep.smooth = sm.loss;
  }
  rep.total = weights.rgb * rep.rgb + weights.depth * rep.depth + weights.sdf * rep.sdf +
              weights.fs * rep.fs + weights.smooth * rep.smooth;

  if (backward) render_backward(params, batch, seed, RenderGrads{grads.params, grads.pose});
  return rep;
}

}  // namespace nslam
