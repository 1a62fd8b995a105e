#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nslam/optim.hpp"

namespace nslam {

struct GradientCase {
  std::string term;   // rgb, depth, sdf, fs, smooth, total
  std::string group;  // grid, geo, color, pose
  GradCheckReport report;
};

struct GradientSuiteReport {
  std::vector<GradientCase> cases;
  double max_rel_error = 0;
  double seconds = 0;
  bool passed(double tol) const;
};

struct GradientSuiteOptions {
  std::uint64_t seed = 7;
  int n_rays = 10;
  int coords_per_group = 300;  // sampled coordinates per parameter group
  double h = 1e-4;
};

/// Checks the analytic gradient of every loss term and of the weighted total
/// against central differences, separately for the grid features, both
/// decoders and a shared camera twist, on a randomized ray batch.
GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& opts = {});

}  // namespace nslam
