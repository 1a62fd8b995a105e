#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

namespace nslam {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/**
 * Rigid camera-to-world transform stored as a twist in se(3).
 *
 * Layout: xi = (rho_x, rho_y, rho_z, omega_x, omega_y, omega_z); the
 * translation part comes first. The matrix form is exp(xi^).
 */
struct Pose {
  Vec6 xi = Vec6::Zero();

  static Pose identity() { return Pose{}; }
  static Pose from_matrix(const Mat4& T);
  static Pose from_translation(const Vec3& t);

  Mat4 matrix() const;
  Mat3 rotation() const { return matrix().topLeftCorner<3, 3>(); }
  Vec3 translation() const { return matrix().topRightCorner<3, 1>(); }
};

/// Pinhole intrinsics, +z forward, +x right, +y down.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double depth_scale = 1.0 / 5000.0;  // raw depth unit -> meters

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
  /// Unnormalized camera-frame direction ((u-cx)/fx, (v-cy)/fy, 1).
  Vec3 backproject(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

struct Pixel {
  int u = 0, v = 0;
  bool operator==(const Pixel&) const = default;
};

/// A camera ray with its observation. `gt_depth` is the range along the unit
/// direction (the z-depth of the pixel times |backproject(u, v)|).
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Pixel pixel;
  Vec3 gt_color = Vec3::Zero();
  std::optional<double> gt_depth;
};

Mat3 hat(const Vec3& w);

/// SO(3) exponential by Rodrigues' formula (Taylor coefficients below 1e-2 rad).
Mat3 so3_exp(const Vec3& w);

Mat4 exp_map(const Vec6& xi);

/// Inverse of exp_map; throws Errc::NonRigidInput when the rotation block is
/// not orthonormal within 1e-6 or has negative determinant.
Vec6 log_map(const Mat4& T);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);

/// Apply a left perturbation: returns exp(delta^) * pose.
Pose retract_left(const Pose& pose, const Vec6& delta);

/// Throws Errc::PixelOutOfBounds if (u, v) lies outside the image.
Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, int u, int v);

/// z-depth -> range along the unit ray through (u, v).
double depth_to_range(const Intrinsics& intr, int u, int v, double z_depth);

Eigen::Quaterniond rotation_to_quaternion(const Mat3& R);

}  // namespace nslam
