#pragma once

#include <set>
#include <vector>

#include <Eigen/Core>

#include "mapgo/pose_graph.hpp"

namespace mapgo {

struct LMConfig {
  int max_iters = 75;
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 3.0;  // damping is divided by this on acceptance
  double gradient_tolerance = 1e-10;
  double relative_decrease_tolerance = 1e-12;
  double max_damping = 1e12;

  void validate() const;
};

struct LMIteration {
  int iter = 0;
  double objective = 0.0;  // after the iteration
  double damping = 0.0;    // damping used for the attempted step
  double step_norm = 0.0;
  bool accepted = false;
};

/// Quadratic pull of one vertex toward a target pose:
/// d^T W d with d = (x - tx, y - ty, wrap(theta - ttheta)).
struct PosePrior {
  VertexId vertex = 0;
  Pose2 target;
  Eigen::Matrix3d weight = Eigen::Matrix3d::Identity();
};

struct LMResult {
  PoseGraph graph;
  std::vector<LMIteration> log;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int accepted_steps = 0;
};

/// Damped Gauss-Newton on objective_F (plus optional priors) with analytic
/// Jacobians and a sparse Cholesky solve. Vertices in `fixed` are held
/// bit-exact. Accepted steps strictly decrease the objective; rejected steps
/// raise the damping. Throws SingularNormalEquations if the damping
/// overflows max_damping.
LMResult lm_solve(const PoseGraph& g, const Weights& w, const LMConfig& cfg,
                  const std::set<VertexId>& fixed, const std::vector<PosePrior>& priors = {});

/// Anchors the lowest vertex id and runs lm_solve.
LMResult lm_refine(const PoseGraph& g, const Weights& w = {}, const LMConfig& cfg = {});

/// Objective plus prior terms.
double objective_with_priors(const PoseGraph& g, const Weights& w,
                             const std::vector<PosePrior>& priors);

/// Jacobians of edge_residual (rotation, tx, ty) with respect to the
/// (x, y, theta) coordinates of the `from` and `to` vertices.
void edge_jacobians(const EdgeMeasurement& e, const Pose2& xp, const Pose2& xq,
                    Eigen::Matrix3d& j_from, Eigen::Matrix3d& j_to);

/// 3x3 diagonal block of the Gauss-Newton Hessian of objective_F for vertex
/// v (2 * sum J^T Omega J over incident edges).
Eigen::Matrix3d vertex_information(const PoseGraph& g, const Weights& w, VertexId v);

}  // namespace mapgo
