#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "mapgo/lm.hpp"
#include "mapgo/partition.hpp"

namespace mapgo {

struct AdmmConfig {
  double penalty = 0.1;  // rho
  int max_iters = 100;
  double tolerance = 1e-6;
  /// Residual balancing: rho is scaled by `penalty_scale` whenever the primal
  /// and dual residuals differ by more than `balance_ratio`.
  bool adaptive_penalty = true;
  double balance_ratio = 10.0;
  double penalty_scale = 2.0;
  /// Over-relaxation factor in [1, 2); 1 is plain ADMM.
  double relaxation = 1.6;
  Weights weights;
  /// Local solves are warm-started every round, so a few iterations suffice.
  LMConfig local{.max_iters = 20, .gradient_tolerance = 1e-12, .relative_decrease_tolerance = 1e-15};

  void validate() const;
};

struct AdmmResult {
  std::map<VertexId, Pose2> resolved;
  /// Input partition with local estimates replaced by the final iterates and
  /// separator copies set to their resolved pose.
  Partition partition;
  int iterations = 0;
  bool converged = false;
  /// Max separator disagreement after each round.
  std::vector<double> disagreement;
};

/// Information-weighted pose average: translation by the 2x2 translation
/// blocks, rotation by the weighted chordal mean.
Pose2 weighted_pose_mean(const std::vector<Pose2>& poses, const std::vector<Eigen::Matrix3d>& info);

/// Vertex each robot holds fixed in its local solves: the lowest-id
/// non-separator vertex, or the lowest-id vertex if all are separators.
VertexId local_anchor(const Partition& p, int robot);

/// Consensus ADMM over separator copies. Every round each robot solves its
/// subgraph by LM with a proximal pull toward z - u, z becomes the
/// information-weighted mean of x + u, and u accumulates x - z. Weights are
/// the separator's Gauss-Newton Hessian block in each subgraph. On
/// non-convergence the last iterate is returned with converged = false.
AdmmResult admm_consensus(const Partition& p, const AdmmConfig& cfg = {});

}  // namespace mapgo
