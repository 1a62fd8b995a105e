#include "nslam/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nslam/error.hpp"

namespace nslam {

void ParamGroup::reset() {
  m_.clear();
  v_.clear();
  step_ = 0;
}

void ParamGroup::step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw Error(Errc::TapeMismatch, name_ + ": block count mismatch");
  std::size_t total = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) throw Error(Errc::TapeMismatch, name_ + ": block size mismatch");
    for (double g : grads[b]) {
      if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, "parameter group '" + name_ + "'");
    }
    total += params[b].size();
  }
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  } else if (m_.size() != total) {
    throw Error(Errc::TapeMismatch, name_ + ": parameter layout changed between steps");
  }
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    double* p = params[b].data();
    const double* g = grads[b].data();
    for (std::size_t i = 0; i < params[b].size(); ++i, ++k) {
      m_[k] = b1 * m_[k] + (1.0 - b1) * g[i];
      v_[k] = b2 * v_[k] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m_[k] / c1;
      const double vhat = v_[k] / c2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void ParamGroup::step(std::span<double> params, std::span<const double> grads) {
  const std::span<double> p[1] = {params};
  const std::span<const double> g[1] = {grads};
  step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g));
}

GradCheckReport check_gradients(const std::function<GradProbe(std::span<const double>)>& f,
                                std::span<double> x, std::span<const double> analytic, double h,
                                std::span<const std::size_t> indices) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  double max_a = 0;
  for (std::size_t i : indices) max_a = std::max(max_a, std::abs(analytic[i]));

  GradCheckReport rep;
  const GradProbe base = f(x);
  const double roundoff = 1e5 * std::numeric_limits<double>::epsilon() * std::abs(base.value) / h;
  const double floor = std::max({1e-300, 1e-6 * max_a, roundoff});
  for (std::size_t i : indices) {
    const double orig = x[i];
    GradProbe p[4];
    const double offs[4] = {-2 * h, -h, h, 2 * h};
    bool smooth = true;
    for (int k = 0; k < 4; ++k) {
      x[i] = orig + offs[k];
      p[k] = f(x);
      smooth = smooth && p[k].signature == base.signature;
    }
    x[i] = orig;
    if (!smooth) {
      ++rep.skipped_nonsmooth;
      continue;
    }
    const double numeric = (p[0].value - 8.0 * p[1].value + 8.0 * p[2].value - p[3].value) / (12.0 * h);
    const double a = analytic[i];
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
    ++rep.checked;
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace nslam
