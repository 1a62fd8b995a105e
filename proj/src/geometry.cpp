#include "nslam/geometry.hpp"

#include <cmath>
#include <string>

#include "nslam/error.hpp"

namespace nslam {

namespace {

// Below this angle the Rodrigues coefficients come from their Taylor series;
// the closed forms lose digits to cancellation.
constexpr double kSeriesAngle = 1e-2;

// Coefficients of I + a W + b W^2 for exp (a, b) and the left Jacobian (b, c).
struct SO3Coeffs {
  double a, b, c;
};

SO3Coeffs so3_coeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return {1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)),
            0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0)),
            1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0))};
  }
  const double half = std::sin(0.5 * theta) / (0.5 * theta);
  return {std::sin(theta) / theta, 0.5 * half * half, (theta - std::sin(theta)) / (t2 * theta)};
}

// Left Jacobian of SO(3), the V matrix in exp of se(3).
Mat3 so3_left_jacobian(const Vec3& w) {
  const SO3Coeffs k = so3_coeffs(w.norm());
  const Mat3 W = hat(w);
  return Mat3::Identity() + k.b * W + k.c * W * W;
}

Mat3 so3_left_jacobian_inverse(const Vec3& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Mat3 W = hat(w);
  double coeff;
  if (theta < kSeriesAngle) {
    coeff = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  } else {
    const double h = 0.5 * theta;
    coeff = (1.0 - h * std::cos(h) / std::sin(h)) / t2;
  }
  return Mat3::Identity() - 0.5 * W + coeff * W * W;
}

}  // namespace

Mat3 hat(const Vec3& w) {
  Mat3 W;
  W << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
       -w.y(), w.x(), 0;
  return W;
}

Mat3 so3_exp(const Vec3& w) {
  const SO3Coeffs k = so3_coeffs(w.norm());
  const Mat3 W = hat(w);
  return Mat3::Identity() + k.a * W + k.b * W * W;
}

Mat4 exp_map(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 omega = xi.tail<3>();
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = so3_exp(omega);
  T.topRightCorner<3, 1>() = so3_left_jacobian(omega) * rho;
  return T;
}

Vec6 log_map(const Mat4& T) {
  const Mat3 R = T.topLeftCorner<3, 3>();
  const double ortho_err = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho_err <= 1e-6) || R.determinant() <= 0.0) {
    throw Error(Errc::NonRigidInput,
                "rotation block not orthonormal (error " + std::to_string(ortho_err) + ")");
  }
  const Eigen::AngleAxisd aa(R);
  const Vec3 omega = aa.axis() * aa.angle();
  Vec6 xi;
  xi.head<3>() = so3_left_jacobian_inverse(omega) * T.topRightCorner<3, 1>();
  xi.tail<3>() = omega;
  return xi;
}

Pose Pose::from_matrix(const Mat4& T) { return Pose{log_map(T)}; }

Pose Pose::from_translation(const Vec3& t) {
  Pose p;
  p.xi.head<3>() = t;
  return p;
}

Mat4 Pose::matrix() const { return exp_map(xi); }

Pose compose(const Pose& a, const Pose& b) { return Pose::from_matrix(a.matrix() * b.matrix()); }

// exp(-xi) is the exact group inverse of exp(xi).
Pose inverse(const Pose& a) { return Pose{-a.xi}; }

Pose retract_left(const Pose& pose, const Vec6& delta) {
  return Pose::from_matrix(exp_map(delta) * pose.matrix());
}

Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, int u, int v) {
  if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) {
    throw Error(Errc::PixelOutOfBounds,
                "(" + std::to_string(u) + ", " + std::to_string(v) + ")");
  }
  const Mat4 T = pose.matrix();
  Ray ray;
  ray.origin = T.topRightCorner<3, 1>();
  ray.direction = (T.topLeftCorner<3, 3>() * intr.backproject(u, v)).normalized();
  ray.pixel = {u, v};
  return ray;
}

double depth_to_range(const Intrinsics& intr, int u, int v, double z_depth) {
  return z_depth * intr.backproject(u, v).norm();
}

Eigen::Quaterniond rotation_to_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

}  // namespace nslam
