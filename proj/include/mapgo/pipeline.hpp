#pragma once

// End-to-end solver: partition, learned measurement corrections, separator
// consensus, merge, and an optional classical LM tail.

#include <string>
#include <vector>

#include "mapgo/admm.hpp"
#include "mapgo/lm.hpp"
#include "mapgo/policy.hpp"

namespace mapgo {

enum class Variant { V1, V2 };  // V2 appends LM refinement

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct SolveConfig {
  EnvConfig env;
  AdmmConfig admm;
  LMConfig refine;  // V2 tail
  Weights weights;
  ActMode mode = ActMode::Greedy;
  /// Drop non-odometry edges whose gate falls below the threshold before
  /// consensus.
  bool prune = false;
  double gate_threshold = 0.5;
};

struct SolveReport {
  Variant variant = Variant::V1;
  double f_initial = 0.0;  // drifted estimates, original measurements
  double f_v1 = 0.0;       // after consensus
  double f_final = 0.0;    // f_v1 for V1, after refinement for V2
  int steps = 0;
  double episode_return = 0.0;
  int admm_iterations = 0;
  bool admm_converged = false;
  int lm_accepted = 0;
  std::vector<std::size_t> pruned;  // global edge indices, ascending
  double seconds = 0.0;
  /// Final estimates on the original measurements.
  PoseGraph result;
};

/// Gate-based pruning decision per global edge: each robot scores its own
/// subgraph with its actor's encoder at the given threshold.
std::vector<std::size_t> gate_prune(const Partition& p, std::vector<Actor>& actors, double threshold);

/// Runs one episode with `actors` (one per robot), solves the corrected
/// partition by consensus and writes the merged estimates back onto `g`'s
/// original measurements. Objectives are always evaluated on `g`.
SolveReport solve(const PoseGraph& g, std::vector<Actor>& actors, const SolveConfig& cfg, Variant variant,
                  nn::Rng& rng);

}  // namespace mapgo
