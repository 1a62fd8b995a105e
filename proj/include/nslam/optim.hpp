#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nslam {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment state for a fixed list of parameter blocks.
class ParamGroup {
 public:
  ParamGroup() = default;
  ParamGroup(std::string name, AdamConfig cfg) : name_(std::move(name)), cfg_(cfg) {}

  const std::string& name() const { return name_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps() const { return step_; }
  void reset();

  /// One update. `params` and `grads` must list blocks of identical sizes on
  /// every call. Throws Errc::NonFiniteGradient (naming the group) before
  /// touching anything if a gradient is NaN or infinite.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);
  void step(std::span<double> params, std::span<const double> grads);

 private:
  std::string name_;
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::int64_t step_ = 0;
};

/// Value of a probed function plus a signature of its discrete state (e.g.
/// the ReLU activation pattern). Differences are only trusted where the
/// signature is the same at every stencil point.
struct GradProbe {
  double value = 0;
  std::uint64_t signature = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
};

/// Fourth-order central-difference check of `analytic` against `f` at the
/// given coordinates (all coordinates when `indices` is empty). Relative
/// error is |a - n| / max(|a|, |n|, floor), where floor is the larger of
/// 1e-6 * max|a| and the roundoff scale 1e5 * eps * |f(x)| / h.
/// `f` may be evaluated with perturbed copies of `x`; `x` is restored.
GradCheckReport check_gradients(const std::function<GradProbe(std::span<const double>)>& f,
                                std::span<double> x, std::span<const double> analytic, double h,
                                std::span<const std::size_t> indices = {});

}  // namespace nslam
