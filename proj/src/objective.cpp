#include "mapgo/objective.hpp"

#include <cmath>

namespace mapgo {

Eigen::Vector3d edge_residual(const EdgeMeasurement& e, const Pose2& xp, const Pose2& xq) {
  const double c = std::cos(xp.theta), s = std::sin(xp.theta);
  const double dx = xq.x - xp.x, dy = xq.y - xp.y;
  return {so2_log(xq.theta - xp.theta - e.rel.theta), c * dx + s * dy - e.rel.x,
          -s * dx + c * dy - e.rel.y};
}

double objective_F(const PoseGraph& g, const Weights& w) {
  const double wr2 = w.rotation * w.rotation, wt2 = w.translation * w.translation;
  double f = 0.0;
  for (const auto& e : g.edges) {
    const Eigen::Vector3d r = edge_residual(e, g.estimate(e.from), g.estimate(e.to));
    f += wr2 * r[0] * r[0] + wt2 * (r[1] * r[1] + r[2] * r[2]);
  }
  return f;
}

Eigen::Vector3d measurement_discrepancy(const EdgeMeasurement& e, const Pose2& true_rel) {
  return {e.rel.x - true_rel.x, e.rel.y - true_rel.y, wrap_angle(e.rel.theta - true_rel.theta)};
}

double localization_error_L(const PoseGraph& g) {
  if (!g.has_ground_truth()) throw MissingGroundTruth("localization error needs ground truth");
  double l = 0.0;
  for (const auto& e : g.edges) {
    const Eigen::Vector3d r = measurement_discrepancy(e, g.true_relative(e));
    l += r.dot(e.info.matrix() * r);
  }
  return l;
}

}  // namespace mapgo
