#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "mapgo/partition.hpp"

namespace mapgo {

struct RewardConfig {
  double epsilon = 1e-8;
  double clip = 1.0;
  double bonus_scale = 1.0;

  void validate() const;
};

struct EnvConfig {
  int n_robots = 3;
  double balance_tol = 0.15;
  double max_translation = 0.25;  // meters, norm of (dx, dy)
  double max_rotation = 0.15;     // radians
  /// Selector width; reset rejects subgraphs with more local edges. 0 disables.
  int max_local_edges = 200;
  RewardConfig reward;

  void validate() const;
};

/// Edge is a local edge index into the robot's subgraph; -1 is a no-op
/// (only allowed once the robot has processed every edge).
struct Action {
  int edge = -1;
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
};

Eigen::Vector3d clamp_delta(const Eigen::Vector3d& delta, const EnvConfig& cfg);

struct StepResult {
  std::vector<double> rewards;  // final rewards, bonus included at the last step
  std::vector<double> gains;    // raw (L_prev - L_now) / (L_prev + eps), 0 for no-ops
  bool done = false;
  double bonus = 0.0;
};

struct TraceRecord {
  int step = 0;
  int robot = 0;
  int local_edge = -1;
  std::size_t edge = 0;  // global index
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  double gain = 0.0;
  double reward = 0.0;
  double l_prev = 0.0;
  double l_now = 0.0;
};

/// Markov game over a partitioned pose graph. Robots act simultaneously;
/// each action right-composes exp(delta) onto one unprocessed local edge
/// measurement. A robot's horizon is its local edge count. Rewards need
/// ground truth; without it the environment runs reward-free.
class MarlEnv {
 public:
  explicit MarlEnv(EnvConfig cfg = {});

  void reset(const PoseGraph& g);
  void reset(const PoseGraph& g, Partition p);
  StepResult step(const std::vector<Action>& joint);

  const EnvConfig& config() const { return cfg_; }
  const Partition& partition() const { return part_; }
  const PoseGraph& subgraph(int r) const { return part_.subgraphs.at(r); }
  int robots() const { return part_.size(); }
  const std::vector<bool>& processed(int r) const { return processed_.at(r); }
  int remaining(int r) const { return remaining_.at(r); }
  int horizon(int r) const { return static_cast<int>(processed_.at(r).size()); }
  int t() const { return t_; }
  bool done() const;
  bool rewards_enabled() const { return rewards_; }
  double initial_localization() const { return l0_; }
  double localization(int r) const { return l_prev_.at(r); }
  /// Global graph with the corrected measurements; separators averaged.
  PoseGraph merged() const;
  const std::vector<TraceRecord>& trace() const { return trace_; }
  void write_trace(std::ostream& os) const;

 private:
  EnvConfig cfg_;
  Partition part_;
  std::vector<std::vector<bool>> processed_;
  std::vector<int> remaining_;
  std::vector<double> l_prev_;
  double l0_ = 0.0;
  bool rewards_ = false;
  int t_ = 0;
  std::vector<TraceRecord> trace_;
};

nlohmann::json trace_json(const TraceRecord& r);

}  // namespace mapgo
