#include "nslam/tracking.hpp"

#include "nslam/error.hpp"

namespace nslam {

void TrackingConfig::validate() const {
  if (n_t < 1 || iters < 0 || !(lr_pose > 0) || !(divergence_factor > 0)) {
    throw Error(Errc::ConfigError, "invalid tracking configuration");
  }
}

Pose motion_model_init(const std::optional<Pose>& prev, const std::optional<Pose>& prev2) {
  if (!prev) return Pose::identity();
  if (!prev2) return *prev;
  const Mat4 a = prev->matrix();
  const Mat4 b = prev2->matrix();
  Mat4 b_inv = Mat4::Identity();
  b_inv.topLeftCorner<3, 3>() = b.topLeftCorner<3, 3>().transpose();
  b_inv.topRightCorner<3, 1>() = -b.topLeftCorner<3, 3>().transpose() * b.topRightCorner<3, 1>();
  Mat4 T = a * b_inv * a;
  // Re-orthonormalize the rotation so rounding never trips the rigidity check.
  Eigen::JacobiSVD<Mat3> svd(T.topLeftCorner<3, 3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  T.topLeftCorner<3, 3>() = svd.matrixU() * svd.matrixV().transpose();
  return Pose::from_matrix(T);
}

Pose pose_step(ParamGroup& opt, const Pose& pose, const Vec6& grad) {
  Vec6 step = Vec6::Zero();
  opt.step(std::span<double>(step.data(), 6), std::span<const double>(grad.data(), 6));
  return retract_left(pose, step);
}

namespace {

struct PixelDraw {
  std::vector<Pixel> pixels;
  std::vector<std::vector<double>> depths;
};

std::vector<Ray> rays_at(const Frame& frame, const Pose& pose, const std::vector<Pixel>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Pixel& p : pixels) rays.push_back(frame_ray(frame, pose, p.u, p.v));
  return rays;
}

// Loss of a fixed pixel/sample set at `pose`, forward only. Samples that
// leave the scene box at this pose are dropped.
double fixed_set_loss(const Frame& frame, const SceneParams& params, const Pose& pose, const PixelDraw& draw,
                      const SamplingConfig& sampling, const LossWeights& weights) {
  const std::vector<Ray> rays = rays_at(frame, pose, draw.pixels);
  std::vector<std::vector<double>> depths(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : draw.depths[r]) {
      if (params.bounds.contains(rays[r].origin + t * rays[r].direction, 0.0)) depths[r].push_back(t);
    }
  }
  const RenderBatch batch = render_with_depths(rays, std::move(depths), params, sampling.tr);
  LossWeights w = weights;
  w.smooth = 0;
  std::mt19937_64 unused(0);
  return total_loss(batch, params, w, unused).total;
}

}  // namespace

TrackingResult track_frame(const Frame& frame, const SceneParams& params, const Pose& init,
                           const TrackingConfig& cfg, const SamplingConfig& sampling,
                           const LossWeights& weights, std::mt19937_64& rng, const IterationCallback& on_iter) {
  cfg.validate();
  sampling.validate();
  TrackingResult res;
  res.init = init;
  res.pose = init;
  if (cfg.iters == 0) return res;

  LossWeights w = weights;
  w.smooth = 0;
  ParamGroup opt("tracking_pose", AdamConfig{cfg.lr_pose});
  std::uniform_int_distribution<int> du(0, frame.intr.width - 1), dv(0, frame.intr.height - 1);
  PixelDraw first;
  std::vector<Vec6> ray_grads;
  for (int it = 0; it < cfg.iters; ++it) {
    std::vector<Pixel> pixels(cfg.n_t);
    for (Pixel& p : pixels) {
      p.u = du(rng);
      p.v = dv(rng);
    }
    const std::vector<Ray> rays = rays_at(frame, res.pose, pixels);
    std::vector<std::vector<double>> depths(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) depths[r] = sample_ray(rays[r], sampling, rng, &params.bounds);
    if (it == 0) first = PixelDraw{pixels, depths};
    const RenderBatch batch = render_with_depths(rays, std::move(depths), params, sampling.tr);
    const LossReport rep = total_loss(batch, params, w, rng, 0, LossGrads{nullptr, &ray_grads});
    res.trace.push_back(rep);
    if (on_iter) on_iter(it, rep);
    Vec6 g = Vec6::Zero();
    for (const Vec6& rg : ray_grads) g += rg;
    res.pose = pose_step(opt, res.pose, g);
  }
  res.initial_loss = res.trace.front().total;
  res.final_loss = fixed_set_loss(frame, params, res.pose, first, sampling, w);
  if (res.final_loss > cfg.divergence_factor * res.initial_loss) {
    res.diverged = true;
    res.pose = init;
  }
  return res;
}

}  // namespace nslam
