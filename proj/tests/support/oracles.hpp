#pragma once

// Independent reference implementations used only by the tests.

#include <Eigen/Core>
#include <functional>
#include <random>
#include <vector>

#include "nslam/geometry.hpp"

namespace oracle {

using nslam::Mat3;
using nslam::Mat4;
using nslam::Vec3;
using nslam::Vec6;

/// 4x4 twist matrix [hat(omega) rho; 0 0].
Mat4 twist_matrix(const Vec6& xi);

/// Matrix exponential by scaling and squaring of a 30-term Taylor series.
Eigen::MatrixXd expm(const Eigen::MatrixXd& A);

/// Central difference of a scalar function along coordinate i.
double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t i, double h);

/// Distance from an interior point along a unit direction to an axis-aligned box wall.
double ray_exit_distance(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax);

Vec3 random_unit(std::mt19937_64& rng);

/// Random rigid transform with rotation angle in (0, max_angle) and translation in [-t, t]^3.
Mat4 random_rigid(std::mt19937_64& rng, double max_angle, double t);

bool is_rotation(const Mat3& R, double tol);

}  // namespace oracle
