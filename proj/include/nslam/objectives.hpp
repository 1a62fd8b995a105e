#pragma once

#include <random>
#include <string>

#include "nslam/renderer.hpp"

namespace nslam {

struct LossWeights {
  double rgb = 5.0;
  double depth = 0.1;
  double sdf = 1000.0;
  double fs = 10.0;
  double smooth = 1e-6;

  void validate() const;
};

struct LossReport {
  double rgb = 0, depth = 0, sdf = 0, fs = 0, smooth = 0, total = 0;
  std::size_t n_rays = 0;        // rays entering the color term
  std::size_t n_depth_rays = 0;  // |R_d|
  bool no_depth_rays = false;

  /// One self-describing JSON object (no trailing newline).
  std::string to_json_line() const;
};

/// Which supervision a sample on a depth ray receives.
enum class SampleSet { Truncation, FreeSpace, Excluded };

/// |D - t| <= tr -> Truncation; D - t > tr -> FreeSpace; otherwise (behind the
/// surface beyond the band) Excluded.
SampleSet classify_sample(double observed_depth, double t, double tr);

/// Mean over non-degenerate rays of the channel-averaged squared color error.
/// Throws Errc::EmptyBatch when no ray qualifies.
double loss_rgb(const RenderBatch& batch);

/// Mean squared depth error over non-degenerate rays with a depth. Returns 0
/// and sets *no_depth_rays when there are none.
double loss_depth(const RenderBatch& batch, bool* no_depth_rays = nullptr);

/// Per-ray mean over the truncation band of (s - (D - t))^2, averaged over R_d.
double loss_sdf(const RenderBatch& batch, double tr);

/// Per-ray mean over free-space samples of (s - tr)^2, averaged over R_d.
double loss_freespace(const RenderBatch& batch, double tr);

struct LossGrads {
  SceneGrads* params = nullptr;       // accumulated
  std::vector<Vec6>* pose = nullptr;  // per ray, overwritten
};

/// Weighted sum of all five terms. The smoothness term draws one random region
/// from `rng` when weights.smooth > 0 and is skipped (0) otherwise. When
/// `grads` requests anything the full backward pass is run.
LossReport total_loss(const RenderBatch& batch, const SceneParams& params, const LossWeights& weights,
                      std::mt19937_64& rng, int smooth_region = 8, const LossGrads& grads = {});

}  // namespace nslam
