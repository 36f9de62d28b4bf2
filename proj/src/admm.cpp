#include "mapgo/admm.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace mapgo {

void AdmmConfig::validate() const {
  if (!(penalty > 0.0)) throw InvalidSpec("ADMM penalty must be > 0");
  if (max_iters < 1) throw InvalidSpec("ADMM max_iters must be >= 1");
  if (!(tolerance > 0.0)) throw InvalidSpec("ADMM tolerance must be > 0");
  if (!(relaxation >= 1.0 && relaxation < 2.0)) throw InvalidSpec("ADMM relaxation must be in [1, 2)");
  if (adaptive_penalty && !(balance_ratio > 1.0 && penalty_scale > 1.0))
    throw InvalidSpec("ADMM balancing factors must be > 1");
  local.validate();
}

Pose2 weighted_pose_mean(const std::vector<Pose2>& poses, const std::vector<Eigen::Matrix3d>& info) {
  Eigen::Matrix2d wt = Eigen::Matrix2d::Zero();
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double s = 0.0, c = 0.0;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Eigen::Matrix2d b = info[k].topLeftCorner<2, 2>();
    wt += b;
    acc += b * Eigen::Vector2d(poses[k].x, poses[k].y);
    s += info[k](2, 2) * std::sin(poses[k].theta);
    c += info[k](2, 2) * std::cos(poses[k].theta);
  }
  const Eigen::Vector2d t = wt.ldlt().solve(acc);
  return {t.x(), t.y(), std::atan2(s, c)};
}

VertexId local_anchor(const Partition& p, int robot) {
  const auto& sub = p.subgraphs.at(robot);
  if (sub.vertices.empty()) throw InvalidGraph("empty subgraph");
  for (const auto& [id, v] : sub.vertices)
    if (!p.is_separator(id)) return id;
  return sub.vertices.begin()->first;
}

namespace {

Eigen::Vector3d tangent_diff(const Pose2& a, const Pose2& b) {
  return {a.x - b.x, a.y - b.y, wrap_angle(a.theta - b.theta)};
}

Pose2 tangent_add(const Pose2& a, const Eigen::Vector3d& d) {
  return {a.x + d.x(), a.y + d.y(), a.theta + d.z()};
}

struct Copy {
  int robot;
  VertexId vertex;
  bool active;  // has an incident edge in its subgraph
  Eigen::Matrix3d weight;
  Eigen::Vector3d dual = Eigen::Vector3d::Zero();
};

}  // namespace

AdmmResult admm_consensus(const Partition& p, const AdmmConfig& cfg) {
  cfg.validate();
  AdmmResult res;
  res.partition = p;
  auto& subs = res.partition.subgraphs;

  std::vector<VertexId> anchors(p.size());
  for (int r = 0; r < p.size(); ++r) anchors[r] = local_anchor(p, r);

  std::map<VertexId, std::vector<Copy>> copies;
  for (const auto& [v, list] : p.separators)
    for (const auto& [r, local] : list) {
      const auto& sub = subs[r];
      const bool active = std::any_of(sub.edges.begin(), sub.edges.end(),
                                      [&](const EdgeMeasurement& e) { return e.from == local || e.to == local; });
      Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
      if (active) {
        const Eigen::Matrix3d h = vertex_information(sub, cfg.weights, local);
        // Keep translation and rotation decoupled so the z-update below is the
        // exact minimizer of the weighted proximal terms.
        w.topLeftCorner<2, 2>() = h.topLeftCorner<2, 2>();
        w(2, 2) = h(2, 2);
        w += 1e-9 * (1.0 + w.trace()) * Eigen::Matrix3d::Identity();
      }
      copies[v].push_back({r, local, active, w});
    }

  std::map<VertexId, Pose2> z;
  // Relaxed local iterate a * x + (1 - a) * z, used in place of x in the z
  // and dual updates.
  auto relaxed = [&](const Copy& c, VertexId v) {
    const Pose2& x = subs[c.robot].estimate(c.vertex);
    const auto it = z.find(v);
    if (cfg.relaxation == 1.0 || it == z.end()) return x;
    return tangent_add(it->second, cfg.relaxation * tangent_diff(x, it->second));
  };
  auto update_z = [&](bool with_dual) {
    std::map<VertexId, Pose2> next;
    for (auto& [v, list] : copies) {
      std::vector<Pose2> poses;
      std::vector<Eigen::Matrix3d> info;
      for (const auto& c : list) {
        if (!c.active) continue;
        const Pose2 x = relaxed(c, v);
        poses.push_back(with_dual ? tangent_add(x, c.dual) : x);
        info.push_back(c.weight);
      }
      if (poses.empty()) {
        poses.push_back(subs[list.front().robot].estimate(list.front().vertex));
        info.push_back(Eigen::Matrix3d::Identity());
      }
      next[v] = weighted_pose_mean(poses, info);
    }
    return next;
  };
  z = update_z(false);

  double rho = cfg.penalty;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    for (int r = 0; r < p.size(); ++r) {
      std::set<VertexId> fixed{anchors[r]};
      std::vector<PosePrior> priors;
      for (auto& [v, list] : copies)
        for (const auto& c : list) {
          if (c.robot != r) continue;
          if (!c.active) {
            subs[r].vertices.at(c.vertex).estimate = z.at(v);
            fixed.insert(c.vertex);
            continue;
          }
          priors.push_back({c.vertex, tangent_add(z.at(v), -c.dual), 0.5 * rho * c.weight});
        }
      subs[r] = lm_solve(subs[r], cfg.weights, cfg.local, fixed, priors).graph;
    }

    std::map<VertexId, Pose2> z_next = update_z(true);
    double primal = 0.0, dual_res = 0.0;
    for (auto& [v, list] : copies) {
      dual_res = std::max(dual_res, rho * tangent_diff(z_next.at(v), z.at(v)).norm());
      for (auto& c : list) {
        if (!c.active) continue;
        c.dual += tangent_diff(relaxed(c, v), z_next.at(v));
        primal = std::max(primal, tangent_diff(subs[c.robot].estimate(c.vertex), z_next.at(v)).norm());
      }
    }
    z = std::move(z_next);
    res.disagreement.push_back(primal);
    if (primal < cfg.tolerance) {
      res.converged = true;
      break;
    }
    if (cfg.adaptive_penalty) {
      double scale = 1.0;
      if (primal > cfg.balance_ratio * dual_res) scale = cfg.penalty_scale;
      else if (dual_res > cfg.balance_ratio * primal) scale = 1.0 / cfg.penalty_scale;
      if (scale != 1.0) {
        rho *= scale;
        for (auto& [v, list] : copies)
          for (auto& c : list) c.dual /= scale;  // scaled duals follow rho
      }
    }
  }

  for (const auto& [v, list] : copies)
    for (const auto& c : list) subs[c.robot].vertices.at(c.vertex).estimate = z.at(v);
  res.resolved = std::move(z);
  return res;
}

}  // namespace mapgo
