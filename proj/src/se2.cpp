#include "mapgo/se2.hpp"

#include <cmath>
#include <numbers>

namespace mapgo {

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(theta, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

Pose2::Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

Eigen::Matrix2d Pose2::rotation() const { return so2_exp(theta); }

Eigen::Matrix3d Pose2::matrix() const {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = rotation();
  m(0, 2) = x;
  m(1, 2) = y;
  return m;
}

Pose2 Pose2::inverse() const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {-c * x - s * y, s * x - c * y, -theta};
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

Pose2 between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  const double dx = b.x - a.x, dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta};
}

double so2_log(double angle_delta) { return wrap_angle(angle_delta); }

Eigen::Matrix2d so2_exp(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

namespace {

// V(w) = [[sin w / w, -(1 - cos w) / w], [(1 - cos w) / w, sin w / w]]
void v_coeffs(double w, double& a, double& b) {
  if (std::abs(w) < 1e-9) {
    a = 1.0 - w * w / 6.0;
    b = w / 2.0;
  } else {
    a = std::sin(w) / w;
    b = (1.0 - std::cos(w)) / w;
  }
}

}  // namespace

Pose2 se2_exp(const Eigen::Vector3d& xi) {
  double a, b;
  v_coeffs(xi.z(), a, b);
  return {a * xi.x() - b * xi.y(), b * xi.x() + a * xi.y(), xi.z()};
}

Eigen::Vector3d se2_log(const Pose2& p) {
  const double w = p.theta;
  double a, b;
  v_coeffs(w, a, b);
  const double det = a * a + b * b;
  // V^{-1} = 1/det * [[a, b], [-b, a]]
  return {(a * p.x + b * p.y) / det, (-b * p.x + a * p.y) / det, w};
}

}  // namespace mapgo
