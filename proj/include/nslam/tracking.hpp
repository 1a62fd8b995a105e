#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "nslam/dataio.hpp"
#include "nslam/objectives.hpp"
#include "nslam/optim.hpp"

namespace nslam {

struct TrackingConfig {
  int n_t = 1024;       // pixels per iteration
  int iters = 10;
  double lr_pose = 1e-3;
  double divergence_factor = 2.0;  // revert when final loss > factor * initial loss

  void validate() const;
};

/// Constant-speed prediction T_{t-1} T_{t-2}^{-1} T_{t-1}. With only one
/// previous pose it is copied; with none the identity is returned.
Pose motion_model_init(const std::optional<Pose>& prev, const std::optional<Pose>& prev2);

struct TrackingResult {
  Pose pose;
  Pose init;
  std::vector<LossReport> trace;  // loss before each step
  double initial_loss = 0;  // at `init`, on the first iteration's rays and samples
  double final_loss = 0;    // at the final pose, same rays and samples
  bool diverged = false;    // pose reverted to `init`
};

/// Called after every tracking iteration with (iteration, report).
using IterationCallback = std::function<void(int, const LossReport&)>;

/// Optimizes the camera-to-world pose of `frame` against the frozen field.
/// Every iteration draws n_t pixels uniformly with replacement, renders
/// them, and takes one pose step from the gradient of all pose-dependent
/// terms (smoothness is skipped).
TrackingResult track_frame(const Frame& frame, const SceneParams& params, const Pose& init,
                           const TrackingConfig& cfg, const SamplingConfig& sampling,
                           const LossWeights& weights, std::mt19937_64& rng,
                           const IterationCallback& on_iter = {});

/// One adaptive-moment step on a pose: the step is computed on a 6-vector
/// twist starting at zero and applied as exp(step) * pose.
Pose pose_step(ParamGroup& opt, const Pose& pose, const Vec6& grad);

}  // namespace nslam
