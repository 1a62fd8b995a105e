#include "nslam/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nslam/error.hpp"

namespace nslam {

Vec3 SceneBounds::normalize(const Vec3& x) const {
  const Vec3 u = (x - min).cwiseQuotient(extent());
  return u.cwiseMax(0.0).cwiseMin(1.0);
}

HashGridConfig HashGridConfig::for_bounds(const SceneBounds& bounds, double finest_voxel,
                                          int levels, int r_min, int table_size_log2,
                                          int feature_dim) {
  HashGridConfig cfg;
  cfg.levels = levels;
  cfg.r_min = r_min;
  cfg.table_size_log2 = table_size_log2;
  cfg.feature_dim = feature_dim;
  cfg.r_max = std::max(r_min, static_cast<int>(std::ceil(bounds.extent().maxCoeff() / finest_voxel)));
  return cfg;
}

void HashGridConfig::validate() const {
  if (levels < 1 || r_min < 1 || r_max < r_min || feature_dim < 1 || table_size_log2 < 1 ||
      table_size_log2 > 30) {
    throw Error(Errc::ConfigError, "invalid hash grid configuration");
  }
}

std::vector<int> HashGridConfig::level_resolutions() const {
  std::vector<int> res(levels, r_min);
  if (levels == 1) return res;
  const double growth = std::exp((std::log(double(r_max)) - std::log(double(r_min))) / (levels - 1));
  for (int l = 0; l < levels; ++l) {
    // The epsilon keeps floor() from dropping the last level to r_max - 1.
    res[l] = static_cast<int>(std::floor(r_min * std::pow(growth, l) + 1e-9));
  }
  return res;
}

HashGridParams::HashGridParams(const HashGridConfig& cfg) : config(cfg) {
  config.validate();
  resolutions = config.level_resolutions();
  features.assign(static_cast<std::size_t>(config.levels) * config.table_size() * config.feature_dim,
                  0.0);
}

void HashGridParams::init_uniform(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& f : features) f = dist(rng);
}

bool level_is_dense(int level_res, std::size_t table_size) {
  const std::size_t side = static_cast<std::size_t>(level_res) + 1;
  return side * side * side <= table_size;
}

std::uint32_t hash_index(const std::array<int, 3>& cell, int level_res, std::size_t table_size) {
  const std::uint32_t x = static_cast<std::uint32_t>(cell[0]);
  const std::uint32_t y = static_cast<std::uint32_t>(cell[1]);
  const std::uint32_t z = static_cast<std::uint32_t>(cell[2]);
  if (level_is_dense(level_res, table_size)) {
    const std::uint32_t side = static_cast<std::uint32_t>(level_res) + 1;
    return x + y * side + z * side * side;
  }
  const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
  return static_cast<std::uint32_t>(h % table_size);
}

namespace {

void check_unit(const Vec3& x) {
  if ((x.array() < -1e-9).any() || (x.array() > 1.0 + 1e-9).any()) {
    throw Error(Errc::OutOfUnitCube, "one-blob input outside [0,1]^3");
  }
}

}  // namespace

void one_blob_encode_into(const Vec3& x, int bins, double* out) {
  const double inv_two_var = 0.5 * bins * bins;  // 1 / (2 sigma^2), sigma = 1/bins
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < bins; ++i) {
      const double diff = x[d] - (i + 0.5) / bins;
      out[d * bins + i] = std::exp(-diff * diff * inv_two_var);
    }
  }
}

Eigen::VectorXd one_blob_encode(const Vec3& x, const OneBlobConfig& cfg) {
  check_unit(x);
  Eigen::VectorXd out(cfg.output_dim());
  one_blob_encode_into(x.cwiseMax(0.0).cwiseMin(1.0), cfg.bins, out.data());
  return out;
}

Vec3 one_blob_grad_x(const Vec3& x, int bins, const double* grad_out) {
  const double inv_two_var = 0.5 * bins * bins;
  Vec3 g = Vec3::Zero();
  for (int d = 0; d < 3; ++d) {
    double acc = 0;
    for (int i = 0; i < bins; ++i) {
      const double diff = x[d] - (i + 0.5) / bins;
      acc += grad_out[d * bins + i] * std::exp(-diff * diff * inv_two_var) * (-2.0 * diff * inv_two_var);
    }
    g[d] = acc;
  }
  return g;
}

LevelCorners level_corners(const HashGridParams& grid, int level, const Vec3& u) {
  const int res = grid.resolutions[level];
  const std::size_t table = grid.config.table_size();
  LevelCorners lc;
  std::array<int, 3> base;
  for (int a = 0; a < 3; ++a) {
    const double p = u[a] * res;
    int c = static_cast<int>(std::floor(p));
    c = std::clamp(c, 0, res - 1);
    base[a] = c;
    lc.frac[a] = p - c;
  }
  for (int k = 0; k < 8; ++k) {
    const int dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
    lc.index[k] = hash_index({base[0] + dx, base[1] + dy, base[2] + dz}, res, table);
    lc.weight[k] = (dx ? lc.frac[0] : 1.0 - lc.frac[0]) * (dy ? lc.frac[1] : 1.0 - lc.frac[1]) *
                   (dz ? lc.frac[2] : 1.0 - lc.frac[2]);
  }
  return lc;
}

void grid_interpolate_normalized(const HashGridParams& grid, const Vec3& u, double* out) {
  const int F = grid.config.feature_dim;
  for (int l = 0; l < grid.config.levels; ++l) {
    const LevelCorners lc = level_corners(grid, l, u);
    double* o = out + l * F;
    std::fill(o, o + F, 0.0);
    for (int k = 0; k < 8; ++k) {
      const double* f = grid.entry(l, lc.index[k]);
      for (int j = 0; j < F; ++j) o[j] += lc.weight[k] * f[j];
    }
  }
}

Eigen::VectorXd grid_interpolate(const HashGridParams& grid, const SceneBounds& bounds,
                                 const Vec3& x) {
  if (!bounds.contains(x)) throw Error(Errc::OutOfBounds, "grid query outside scene bounds");
  Eigen::VectorXd out(grid.config.output_dim());
  grid_interpolate_normalized(grid, bounds.normalize(x), out.data());
  return out;
}

Vec3 grid_backward_normalized(const HashGridParams& grid, const Vec3& u, const double* grad_out,
                              double* grad_features) {
  const int F = grid.config.feature_dim;
  Vec3 grad_u = Vec3::Zero();
  for (int l = 0; l < grid.config.levels; ++l) {
    const LevelCorners lc = level_corners(grid, l, u);
    const double* g = grad_out + l * F;
    const double res = grid.resolutions[l];
    const Vec3& f = lc.frac;
    Vec3 grad_p = Vec3::Zero();
    for (int k = 0; k < 8; ++k) {
      const int dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
      const double* feat = grid.entry(l, lc.index[k]);
      double dot = 0;
      for (int j = 0; j < F; ++j) dot += g[j] * feat[j];
      if (grad_features) {
        double* gf = grad_features + grid.level_offset(l) + std::size_t{lc.index[k]} * F;
        for (int j = 0; j < F; ++j) gf[j] += lc.weight[k] * g[j];
      }
      const double wx = dx ? f[0] : 1.0 - f[0];
      const double wy = dy ? f[1] : 1.0 - f[1];
      const double wz = dz ? f[2] : 1.0 - f[2];
      grad_p[0] += dot * (dx ? 1.0 : -1.0) * wy * wz;
      grad_p[1] += dot * wx * (dy ? 1.0 : -1.0) * wz;
      grad_p[2] += dot * wx * wy * (dz ? 1.0 : -1.0);
    }
    grad_u += grad_p * res;
  }
  return grad_u;
}

Vec3 grid_backward(const HashGridParams& grid, const SceneBounds& bounds, const Vec3& x,
                   std::span<const double> grad_out, double* grad_features) {
  if (!bounds.contains(x)) throw Error(Errc::OutOfBounds, "grid query outside scene bounds");
  if (grad_out.size() != static_cast<std::size_t>(grid.config.output_dim())) {
    throw Error(Errc::TapeMismatch, "grid gradient has wrong length");
  }
  const Vec3 grad_u = grid_backward_normalized(grid, bounds.normalize(x), grad_out.data(), grad_features);
  return grad_u.cwiseQuotient(bounds.extent());
}

SmoothnessTerm smoothness_region(const HashGridParams& grid, const std::array<int, 3>& corner,
                                 int region_size, double* grad_features, double grad_scale) {
  const int r = grid.config.r_min;
  for (int a = 0; a < 3; ++a) {
    if (corner[a] < 0 || corner[a] + region_size > r) {
      throw Error(Errc::OutOfBounds, "smoothness region leaves the coarse grid");
    }
  }
  const int D = grid.config.output_dim();
  const int side = region_size + 1;
  // Features at every coarse vertex of the region plus its +1 neighbors.
  std::vector<double> feats(static_cast<std::size_t>(side) * side * side * D);
  auto vid = [side](int i, int j, int k) { return (static_cast<std::size_t>(k) * side + j) * side + i; };
  for (int k = 0; k < side; ++k)
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i) {
        const Vec3 u(double(corner[0] + i) / r, double(corner[1] + j) / r, double(corner[2] + k) / r);
        grid_interpolate_normalized(grid, u, feats.data() + vid(i, j, k) * D);
      }

  SmoothnessTerm term;
  term.n_vertices = static_cast<std::size_t>(region_size) * region_size * region_size;
  const double inv_g = 1.0 / double(term.n_vertices);
  std::vector<double> grad_acc;
  if (grad_features) grad_acc.assign(feats.size(), 0.0);

  for (int k = 0; k < region_size; ++k)
    for (int j = 0; j < region_size; ++j)
      for (int i = 0; i < region_size; ++i) {
        const std::size_t v0 = vid(i, j, k);
        const std::size_t nb[3] = {vid(i + 1, j, k), vid(i, j + 1, k), vid(i, j, k + 1)};
        for (int a = 0; a < 3; ++a) {
          for (int d = 0; d < D; ++d) {
            const double delta = feats[nb[a] * D + d] - feats[v0 * D + d];
            term.axis_sums[a] += delta * delta * inv_g;
            if (grad_features) {
              const double g = 2.0 * delta * inv_g * grad_scale;
              grad_acc[nb[a] * D + d] += g;
              grad_acc[v0 * D + d] -= g;
            }
          }
        }
      }
  term.loss = term.axis_sums.sum();

  if (grad_features) {
    for (int k = 0; k < side; ++k)
      for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i) {
          const Vec3 u(double(corner[0] + i) / r, double(corner[1] + j) / r, double(corner[2] + k) / r);
          grid_backward_normalized(grid, u, grad_acc.data() + vid(i, j, k) * D, grad_features);
        }
  }
  return term;
}

SmoothnessTerm smoothness_sample(const HashGridParams& grid, int region_size, std::mt19937_64& rng,
                                 double* grad_features, double grad_scale) {
  if (region_size < 2) throw Error(Errc::ConfigError, "smoothness region must be >= 2");
  const int size = std::min(region_size, grid.config.r_min);
  std::uniform_int_distribution<int> pick(0, grid.config.r_min - size);
  const std::array<int, 3> corner{pick(rng), pick(rng), pick(rng)};
  return smoothness_region(grid, corner, size, grad_features, grad_scale);
}

}  // namespace nslam
