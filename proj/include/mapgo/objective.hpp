#pragma once

#include <Eigen/Core>

#include "mapgo/pose_graph.hpp"

namespace mapgo {

/// Residual of one edge at the given endpoint estimates, ordered
/// (rotation, tx, ty): Log(R~^T Rp^T Rq) and Rp^T (tq - tp) - t~.
Eigen::Vector3d edge_residual(const EdgeMeasurement& e, const Pose2& xp, const Pose2& xq);

/// Global objective: sum over edges of wR^2 |r_rot|^2 + wT^2 |r_t|^2.
double objective_F(const PoseGraph& g, const Weights& w = {});

/// Discrepancy between an edge's (possibly corrected) measurement and the
/// ground-truth relative pose, ordered (x, y, theta) to match the
/// information matrix.
Eigen::Vector3d measurement_discrepancy(const EdgeMeasurement& e, const Pose2& true_rel);

/// Localization chi^2 error: sum over edges of r^T Lambda r with r the
/// measurement discrepancy. Throws MissingGroundTruth.
double localization_error_L(const PoseGraph& g);

}  // namespace mapgo
