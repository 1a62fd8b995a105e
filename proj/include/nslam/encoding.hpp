#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nslam/geometry.hpp"

namespace nslam {

/// Axis-aligned box enclosing the scene; positions are normalized into [0,1]^3.
struct SceneBounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  bool valid() const { return (max.array() > min.array()).all(); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& x, double tol = 1e-9) const {
    return (x.array() >= min.array() - tol).all() && (x.array() <= max.array() + tol).all();
  }
  /// Maps into [0,1]^3 and clamps tolerance-sized excursions.
  Vec3 normalize(const Vec3& x) const;
};

struct HashGridConfig {
  int levels = 16;
  int r_min = 16;
  int r_max = 16;
  int table_size_log2 = 13;
  int feature_dim = 2;

  /// r_max = ceil(max extent / finest_voxel).
  static HashGridConfig for_bounds(const SceneBounds& bounds, double finest_voxel, int levels = 16,
                                   int r_min = 16, int table_size_log2 = 13, int feature_dim = 2);

  std::size_t table_size() const { return std::size_t{1} << table_size_log2; }
  int output_dim() const { return levels * feature_dim; }
  /// r_l = floor(r_min * b^l), b = exp((ln r_max - ln r_min) / (L - 1)).
  std::vector<int> level_resolutions() const;
  void validate() const;
};

struct OneBlobConfig {
  int bins = 16;
  int output_dim() const { return 3 * bins; }
};

/// Learnable multi-resolution feature tables. Layout: [level][entry][feature].
struct HashGridParams {
  HashGridConfig config;
  std::vector<int> resolutions;
  std::vector<double> features;

  HashGridParams() = default;
  explicit HashGridParams(const HashGridConfig& cfg);

  std::size_t level_offset(int level) const {
    return static_cast<std::size_t>(level) * config.table_size() * config.feature_dim;
  }
  double* entry(int level, std::uint32_t index) {
    return features.data() + level_offset(level) + std::size_t{index} * config.feature_dim;
  }
  const double* entry(int level, std::uint32_t index) const {
    return features.data() + level_offset(level) + std::size_t{index} * config.feature_dim;
  }
  void init_uniform(std::mt19937_64& rng, double scale = 1e-4);
};

/// Index of grid vertex `cell` in a level with per-axis resolution
/// `level_res` (vertices span [0, level_res]^3). Uses the row-major dense
/// index when the level fits the table, the prime-XOR spatial hash otherwise.
std::uint32_t hash_index(const std::array<int, 3>& cell, int level_res, std::size_t table_size);

bool level_is_dense(int level_res, std::size_t table_size);

/// Gaussian kernel activations at the bin centers, per dimension.
/// Throws Errc::OutOfUnitCube when a component leaves [0,1] by more than 1e-9.
Eigen::VectorXd one_blob_encode(const Vec3& x, const OneBlobConfig& cfg);
void one_blob_encode_into(const Vec3& x, int bins, double* out);
/// Accumulates d(sum grad_out . encoding)/dx.
Vec3 one_blob_grad_x(const Vec3& x, int bins, const double* grad_out);

/// The 8 corners touched on one level: indices into the level table and weights.
struct LevelCorners {
  std::array<std::uint32_t, 8> index;
  std::array<double, 8> weight;
  Vec3 frac;
};

/// Corner lookup for a normalized position u in [0,1]^3.
LevelCorners level_corners(const HashGridParams& grid, int level, const Vec3& u);

/// Trilinear interpolation, concatenated over levels (length L*F).
/// Throws Errc::OutOfBounds when x is outside `bounds`.
Eigen::VectorXd grid_interpolate(const HashGridParams& grid, const SceneBounds& bounds,
                                 const Vec3& x);
void grid_interpolate_normalized(const HashGridParams& grid, const Vec3& u, double* out);

/// Scatters grad_out (length L*F) into grad_features (same layout as
/// grid.features) with the trilinear weights and returns d/du.
Vec3 grid_backward_normalized(const HashGridParams& grid, const Vec3& u, const double* grad_out,
                              double* grad_features);

/// Backward in world units; grad_features may be null.
Vec3 grid_backward(const HashGridParams& grid, const SceneBounds& bounds, const Vec3& x,
                   std::span<const double> grad_out, double* grad_features);

struct SmoothnessTerm {
  double loss = 0;           // (1/|G|) sum over G of dx^2 + dy^2 + dz^2
  Vec3 axis_sums = Vec3::Zero();  // per-axis contributions, same normalization
  std::size_t n_vertices = 0;
};

/// Feature smoothness over a cube of region_size^3 coarse-level vertices
/// starting at `corner`; differences are taken to the +1 coarse neighbor
/// along each axis. Gradient is accumulated (scaled by `grad_scale`) into
/// grad_features when non-null.
SmoothnessTerm smoothness_region(const HashGridParams& grid, const std::array<int, 3>& corner,
                                 int region_size, double* grad_features = nullptr,
                                 double grad_scale = 1.0);

/// Draws a random region with `rng` and evaluates smoothness_region on it.
SmoothnessTerm smoothness_sample(const HashGridParams& grid, int region_size, std::mt19937_64& rng,
                                 double* grad_features = nullptr, double grad_scale = 1.0);

}  // namespace nslam
