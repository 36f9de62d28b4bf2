#pragma once

#include <Eigen/Core>

namespace mapgo {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Planar rigid transform. The angle is kept wrapped into (-pi, pi]; the
/// rotation matrix is only built on demand.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_);

  static Pose2 identity() { return {}; }

  Eigen::Matrix2d rotation() const;
  Eigen::Vector2d translation() const { return {x, y}; }
  /// 3x3 homogeneous matrix.
  Eigen::Matrix3d matrix() const;
  Eigen::Vector3d vector() const { return {x, y, theta}; }

  Pose2 inverse() const;

  bool operator==(const Pose2&) const = default;
};

Pose2 compose(const Pose2& a, const Pose2& b);
inline Pose2 operator*(const Pose2& a, const Pose2& b) { return compose(a, b); }

/// Relative transform a^{-1} * b.
Pose2 between(const Pose2& a, const Pose2& b);

/// Matrix logarithm on SO(2) expressed on the angle: the wrapped angle.
double so2_log(double angle_delta);
Eigen::Matrix2d so2_exp(double theta);

/// Exponential / logarithm on SE(2) with tangent ordering (vx, vy, omega).
Pose2 se2_exp(const Eigen::Vector3d& xi);
Eigen::Vector3d se2_log(const Pose2& p);

}  // namespace mapgo
