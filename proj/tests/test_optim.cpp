#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nslam/error.hpp"
#include "nslam/optim.hpp"

using namespace nslam;

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamGroup g("p", {0.1});
  std::vector<double> x{1.0, -2.0}, dx{0.0, 0.0};
  g.step(x, dx);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], -2.0);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  const AdamConfig c{0.01, 0.9, 0.999, 1e-8};
  ParamGroup g("p", c);
  std::vector<double> x{0.5};
  const double grads[3] = {0.3, -0.1, 2.0};
  double m = 0, v = 0, want = 0.5;
  for (int t = 1; t <= 3; ++t) {
    const double gr = grads[t - 1];
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    want -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    std::vector<double> gv{gr};
    g.step(x, gv);
    EXPECT_NEAR(x[0], want, 1e-15) << t;
  }
  // The first step has magnitude lr * |g| / (|g| + eps).
  ParamGroup h("q", c);
  std::vector<double> y{0.0}, gy{0.3};
  h.step(y, gy);
  EXPECT_NEAR(y[0], -0.01 * 0.3 / (0.3 + 1e-8), 1e-16);
  EXPECT_EQ(h.steps(), 1);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParamGroup g("x", {0.1});
  std::vector<double> x{1.0};
  for (int i = 0; i < 100; ++i) {
    std::vector<double> gr{2 * x[0]};
    g.step(x, gr);
  }
  EXPECT_LT(std::abs(x[0]), 0.05);
}

TEST(Adam, NonFiniteGradientNamesGroupAndLeavesState) {
  ParamGroup g("decoder", {0.1});
  std::vector<double> x{1.0, 1.0}, gr{0.5, std::nan("")};
  try {
    g.step(x, gr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("decoder"), std::string::npos);
  }
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(g.steps(), 0);
}

TEST(Adam, BatchSplittingInvariance) {
  ParamGroup a("a", {0.05}), b("b", {0.05});
  std::vector<double> xa{0.3, -0.2, 0.9}, xb = xa;
  const std::vector<double> g1{0.1, 0.2, -0.3}, g2{-0.4, 0.05, 0.6};
  std::vector<double> sum(3), acc(3, 0.0);
  for (int i = 0; i < 3; ++i) sum[i] = g1[i] + g2[i];
  for (int i = 0; i < 3; ++i) acc[i] += g1[i];
  for (int i = 0; i < 3; ++i) acc[i] += g2[i];
  a.step(xa, sum);
  b.step(xb, acc);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(xa[i], xb[i], 1e-12);
}

TEST(Adam, ScaledGradientsKeepSignPattern) {
  ParamGroup a("a", {0.05, 0.9, 0.999, 0.0}), b("b", {0.05, 0.9, 0.999, 0.0});
  std::vector<double> xa{0, 0, 0, 0}, xb = xa;
  std::vector<double> g{0.3, -1e-3, 5.0, -2.0}, gs(4);
  for (int i = 0; i < 4; ++i) gs[i] = 37.0 * g[i];
  a.step(xa, g);
  b.step(xb, gs);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(std::signbit(xa[i]), std::signbit(xb[i]));
}

TEST(Adam, MultiBlockStep) {
  ParamGroup g("grid", {0.1});
  std::vector<double> p1{1.0, 2.0}, p2{3.0};
  std::vector<double> g1{1.0, 0.0}, g2{-1.0};
  const std::vector<std::span<double>> ps{p1, p2};
  const std::vector<std::span<const double>> gs{g1, g2};
  g.step(ps, gs);
  EXPECT_NEAR(p1[0], 0.9, 1e-7);
  EXPECT_EQ(p1[1], 2.0);
  EXPECT_NEAR(p2[0], 3.1, 1e-7);
}

TEST(CheckGradients, QuadraticIsExact) {
  std::vector<double> x{0.3, -1.2, 2.0};
  const auto f = [](std::span<const double> p) {
    return GradProbe{p[0] * p[0] + 3 * p[1] * p[1] - p[0] * p[2], 0};
  };
  const std::vector<double> a{2 * 0.3 - 2.0, 6 * -1.2, -0.3};
  const GradCheckReport r = check_gradients(f, x, a, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.checked, 3u);
  EXPECT_EQ(x[0], 0.3);
}

TEST(CheckGradients, ConstantHasZeroGradient) {
  std::vector<double> x{1, 2};
  const std::vector<double> a{0, 0};
  const GradCheckReport r = check_gradients([](std::span<const double>) { return GradProbe{4.0, 0}; }, x, a, 1e-4);
  EXPECT_EQ(r.max_abs_error, 0.0);
}

TEST(CheckGradients, DetectsWrongGradient) {
  std::vector<double> x{0.5};
  const std::vector<double> a{1.5};
  const auto f = [](std::span<const double> p) { return GradProbe{std::sin(p[0]), 0}; };
  EXPECT_GT(check_gradients(f, x, a, 1e-4).max_rel_error, 0.1);
}

TEST(CheckGradients, SkipsKinks) {
  std::vector<double> x{1e-5};
  const std::vector<double> a{1.0};
  const auto f = [](std::span<const double> p) { return GradProbe{std::abs(p[0]), p[0] > 0 ? 1u : 0u}; };
  const GradCheckReport r = check_gradients(f, x, a, 1e-4);
  EXPECT_EQ(r.skipped_nonsmooth, 1u);
  EXPECT_EQ(r.checked, 0u);
}

TEST(CheckGradients, RandomizedMlpLoss) {
  // One hidden tanh layer, squared-error loss, analytic gradient by hand.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.5);
  const int in = 4, hid = 6;
  std::vector<double> w(hid * in + hid);
  for (double& v : w) v = n(rng);
  std::vector<double> xin(in);
  for (double& v : xin) v = n(rng);
  const auto forward = [&](std::span<const double> p, std::vector<double>* grad) {
    double out = 0;
    std::vector<double> h(hid);
    for (int j = 0; j < hid; ++j) {
      double a = 0;
      for (int i = 0; i < in; ++i) a += p[j * in + i] * xin[i];
      h[j] = std::tanh(a);
      out += p[hid * in + j] * h[j];
    }
    const double e = out - 0.7;
    if (grad) {
      grad->assign(p.size(), 0.0);
      for (int j = 0; j < hid; ++j) {
        (*grad)[hid * in + j] = 2 * e * h[j];
        const double dh = 2 * e * p[hid * in + j] * (1 - h[j] * h[j]);
        for (int i = 0; i < in; ++i) (*grad)[j * in + i] = dh * xin[i];
      }
    }
    return e * e;
  };
  std::vector<double> a;
  forward(w, &a);
  const GradCheckReport r =
      check_gradients([&](std::span<const double> p) { return GradProbe{forward(p, nullptr), 0}; }, w, a, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.checked, w.size());
}
