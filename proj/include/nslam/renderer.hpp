#pragma once

#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nslam/scene_field.hpp"

namespace nslam {

struct SamplingConfig {
  int m_c = 32;         // stratified samples in [near, far]
  int m_f = 11;         // depth-guided samples in [d - d_s, d + d_s]
  double near = 0.1;    // meters along the ray
  double far = 6.0;
  double d_s = 0.025;   // 0.25 * tr
  double tr = 0.1;      // truncation distance

  void validate() const;
};

/// Entry/exit ranges of the ray inside `bounds`, or nullopt if it misses.
std::optional<std::pair<double, double>> ray_box_interval(const Ray& ray, const SceneBounds& bounds);

/// Sorted sample depths: m_c stratified samples over [near, far] plus, for rays
/// with a depth, m_f stratified samples in the surface window clamped to
/// [near, far]. When `clip` is given, [near, far] is first intersected with
/// the ray's span inside the box so every sample is a valid field query; a
/// ray that misses the box gets no samples.
std::vector<double> sample_ray(const Ray& ray, const SamplingConfig& cfg, std::mt19937_64& rng,
                               const SceneBounds* clip = nullptr);

/// w = sigmoid(s/tr) * sigmoid(-s/tr).
double sdf_to_weight(double s, double tr);
double sdf_to_weight_grad(double s, double tr);

constexpr double kDegenerateWeightSum = 1e-10;

/// Per-ray samples, field predictions, and rendered color/depth.
struct RenderBatch {
  std::vector<Ray> rays;
  std::vector<std::size_t> offset;  // samples of ray r: [offset[r], offset[r+1])
  std::vector<double> t;
  std::vector<Vec3> x;
  Eigen::VectorXd sdf;
  RowMat color;  // samples x 3
  std::vector<double> weight;
  std::vector<Vec3> color_hat;
  std::vector<double> depth_hat;
  std::vector<double> weight_sum;
  std::vector<char> degenerate;  // sum of weights below kDegenerateWeightSum
  FieldTape tape;
  double tr = 0.1;

  std::size_t n_rays() const { return rays.size(); }
  std::size_t n_samples() const { return t.size(); }
};

/// Renders with explicit sample depths (one sorted list per ray).
RenderBatch render_with_depths(std::span<const Ray> rays, std::vector<std::vector<double>> depths,
                               const SceneParams& params, double tr);

/// Samples every ray with `rng` and renders it.
RenderBatch render(std::span<const Ray> rays, const SceneParams& params, const SamplingConfig& cfg,
                   std::mt19937_64& rng);

/// Upstream gradients entering the renderer.
struct RenderSeed {
  std::vector<Vec3> color_hat;   // dL/dc_hat per ray
  std::vector<double> depth_hat; // dL/dd_hat per ray
  std::vector<double> sdf;       // direct dL/ds per sample

  static RenderSeed zeros(const RenderBatch& batch);
};

struct RenderGrads {
  SceneGrads* params = nullptr;         // accumulated
  std::vector<Vec6>* pose = nullptr;    // per ray, left-perturbation gradient (overwritten)
};

void render_backward(const SceneParams& params, const RenderBatch& batch, const RenderSeed& seed,
                     const RenderGrads& out);

}  // namespace nslam
