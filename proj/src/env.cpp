#include "mapgo/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mapgo/objective.hpp"

namespace mapgo {

void RewardConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidSpec("reward epsilon must be > 0");
  if (!(clip > 0.0)) throw InvalidSpec("reward clip must be > 0");
}

void EnvConfig::validate() const {
  if (n_robots < 1) throw InvalidSpec("need at least one robot");
  if (!(max_translation > 0.0 && max_rotation > 0.0)) throw InvalidSpec("correction limits must be > 0");
  if (max_local_edges < 0) throw InvalidSpec("max_local_edges must be >= 0");
  reward.validate();
}

Eigen::Vector3d clamp_delta(const Eigen::Vector3d& delta, const EnvConfig& cfg) {
  Eigen::Vector3d d = delta;
  const double n = d.head<2>().norm();
  if (n > cfg.max_translation) d.head<2>() *= cfg.max_translation / n;
  d.z() = std::clamp(d.z(), -cfg.max_rotation, cfg.max_rotation);
  return d;
}

MarlEnv::MarlEnv(EnvConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void MarlEnv::reset(const PoseGraph& g) { reset(g, mapgo::partition(g, cfg_.n_robots, cfg_.balance_tol)); }

void MarlEnv::reset(const PoseGraph& g, Partition p) {
  part_ = std::move(p);
  if (cfg_.max_local_edges > 0)
    for (int r = 0; r < part_.size(); ++r)
      if (static_cast<int>(part_.subgraphs[r].edges.size()) > cfg_.max_local_edges)
        throw InvalidSpec("robot " + std::to_string(r) + " has " + std::to_string(part_.subgraphs[r].edges.size()) +
                          " local edges, more than the selector's " + std::to_string(cfg_.max_local_edges));
  processed_.assign(part_.size(), {});
  remaining_.assign(part_.size(), 0);
  for (int r = 0; r < part_.size(); ++r) {
    processed_[r].assign(part_.subgraphs[r].edges.size(), false);
    remaining_[r] = static_cast<int>(part_.subgraphs[r].edges.size());
  }
  rewards_ = g.has_ground_truth();
  l_prev_.assign(part_.size(), 0.0);
  l0_ = 0.0;
  if (rewards_) {
    l0_ = localization_error_L(g);
    for (int r = 0; r < part_.size(); ++r) l_prev_[r] = localization_error_L(part_.subgraphs[r]);
  }
  t_ = 0;
  trace_.clear();
}

bool MarlEnv::done() const {
  return std::all_of(remaining_.begin(), remaining_.end(), [](int n) { return n == 0; });
}

StepResult MarlEnv::step(const std::vector<Action>& joint) {
  if (static_cast<int>(joint.size()) != part_.size()) throw InvalidSpec("one action per robot required");
  if (done()) throw InvalidSpec("episode already finished");
  StepResult res;
  res.rewards.assign(part_.size(), 0.0);
  res.gains.assign(part_.size(), 0.0);
  ++t_;
  for (int r = 0; r < part_.size(); ++r) {
    const Action& a = joint[r];
    if (remaining_[r] == 0) {
      if (a.edge != -1) throw AlreadyProcessedEdge("robot " + std::to_string(r) + " has no edges left");
      continue;
    }
    if (a.edge < 0 || a.edge >= horizon(r)) throw InvalidSpec("robot " + std::to_string(r) + " must select a local edge");
    if (processed_[r][a.edge]) throw AlreadyProcessedEdge("edge " + std::to_string(a.edge) + " of robot " + std::to_string(r));
    const Eigen::Vector3d d = clamp_delta(a.delta, cfg_);
    auto& e = part_.subgraphs[r].edges[a.edge];
    e.rel = compose(e.rel, se2_exp(d));
    processed_[r][a.edge] = true;
    --remaining_[r];

    TraceRecord rec;
    rec.step = t_;
    rec.robot = r;
    rec.local_edge = a.edge;
    rec.edge = part_.local_edges[r][a.edge];
    rec.delta = d;
    if (rewards_) {
      const double now = localization_error_L(part_.subgraphs[r]);
      const double gain = (l_prev_[r] - now) / (l_prev_[r] + cfg_.reward.epsilon);
      res.gains[r] = gain;
      res.rewards[r] = std::clamp(std::tanh(gain), -cfg_.reward.clip, cfg_.reward.clip);
      rec.l_prev = l_prev_[r];
      rec.l_now = now;
      rec.gain = gain;
      rec.reward = res.rewards[r];
      l_prev_[r] = now;
    }
    trace_.push_back(rec);
  }
  res.done = done();
  if (res.done && rewards_) {
    const double lt = localization_error_L(merged());
    res.bonus = cfg_.reward.bonus_scale * std::log(l0_ / (lt + cfg_.reward.epsilon));
    for (double& x : res.rewards) x += res.bonus;
  }
  return res;
}

PoseGraph MarlEnv::merged() const { return merge(part_, average_separators(part_)); }

nlohmann::json trace_json(const TraceRecord& r) {
  return {{"step", r.step},     {"robot", r.robot},
          {"local_edge", r.local_edge}, {"edge", r.edge},
          {"delta", {r.delta.x(), r.delta.y(), r.delta.z()}},
          {"gain", r.gain},     {"reward", r.reward},
          {"L_prev", r.l_prev}, {"L_now", r.l_now}};
}

void MarlEnv::write_trace(std::ostream& os) const {
  for (const auto& r : trace_) os << trace_json(r).dump() << '\n';
}

}  // namespace mapgo
