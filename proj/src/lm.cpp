#include "mapgo/lm.hpp"

#include <cmath>
#include <unordered_map>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mapgo/objective.hpp"

namespace mapgo {

void LMConfig::validate() const {
  if (!(initial_damping > 0.0)) throw InvalidSpec("initial damping must be > 0");
  if (!(damping_up > 1.0 && damping_down > 1.0)) throw InvalidSpec("damping factors must be > 1");
  if (max_iters < 0) throw InvalidSpec("max_iters must be >= 0");
}

namespace {

Eigen::Vector3d prior_residual(const PosePrior& p, const Pose2& x) {
  return {x.x - p.target.x, x.y - p.target.y, wrap_angle(x.theta - p.target.theta)};
}

Eigen::Matrix3d residual_weight(const Weights& w) {
  return Eigen::Vector3d(w.rotation * w.rotation, w.translation * w.translation,
                         w.translation * w.translation)
      .asDiagonal();
}

}  // namespace

void edge_jacobians(const EdgeMeasurement&, const Pose2& xp, const Pose2& xq,
                    Eigen::Matrix3d& j_from, Eigen::Matrix3d& j_to) {
  const double c = std::cos(xp.theta), s = std::sin(xp.theta);
  const double dx = xq.x - xp.x, dy = xq.y - xp.y;
  // rows: (rotation, tx, ty); columns: (x, y, theta)
  j_from << 0, 0, -1,
            -c, -s, -s * dx + c * dy,
            s, -c, -c * dx - s * dy;
  j_to << 0, 0, 1,
          c, s, 0,
          -s, c, 0;
}

double objective_with_priors(const PoseGraph& g, const Weights& w,
                             const std::vector<PosePrior>& priors) {
  double f = objective_F(g, w);
  for (const auto& p : priors) {
    const Eigen::Vector3d d = prior_residual(p, g.estimate(p.vertex));
    f += d.dot(p.weight * d);
  }
  return f;
}

Eigen::Matrix3d vertex_information(const PoseGraph& g, const Weights& w, VertexId v) {
  const Eigen::Matrix3d omega = residual_weight(w);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d jf, jt;
  for (const auto& e : g.edges) {
    if (e.from != v && e.to != v) continue;
    edge_jacobians(e, g.estimate(e.from), g.estimate(e.to), jf, jt);
    if (e.from == v) h += jf.transpose() * omega * jf;
    if (e.to == v) h += jt.transpose() * omega * jt;
  }
  return 2.0 * h;
}

LMResult lm_solve(const PoseGraph& g, const Weights& w, const LMConfig& cfg,
                  const std::set<VertexId>& fixed, const std::vector<PosePrior>& priors) {
  cfg.validate();
  LMResult res;
  res.graph = g;
  res.initial_objective = res.final_objective = objective_with_priors(g, w, priors);

  std::unordered_map<VertexId, int> index;
  std::vector<VertexId> free_ids;
  for (const auto& [id, v] : g.vertices)
    if (!fixed.contains(id)) {
      index.emplace(id, static_cast<int>(free_ids.size()));
      free_ids.push_back(id);
    }
  const int dim = 3 * static_cast<int>(free_ids.size());
  if (dim == 0) return res;

  const Eigen::Matrix3d omega = residual_weight(w);
  Eigen::SparseMatrix<double> h(dim, dim);
  Eigen::VectorXd grad(dim);
  std::vector<Eigen::Triplet<double>> trip;

  // Linearize: H = sum J^T Omega J, grad = sum J^T Omega r (common factor 2 dropped).
  auto linearize = [&](const PoseGraph& cur) {
    trip.clear();
    grad.setZero();
    Eigen::Matrix3d jf, jt;
    for (const auto& e : cur.edges) {
      const Pose2& xp = cur.estimate(e.from);
      const Pose2& xq = cur.estimate(e.to);
      const Eigen::Vector3d r = edge_residual(e, xp, xq);
      edge_jacobians(e, xp, xq, jf, jt);
      const auto ip = index.find(e.from), iq = index.find(e.to);
      const bool fp = ip != index.end(), fq = iq != index.end();
      auto add_block = [&](int bi, int bj, const Eigen::Matrix3d& m) {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) trip.emplace_back(3 * bi + a, 3 * bj + b, m(a, b));
      };
      if (fp) {
        grad.segment<3>(3 * ip->second) += jf.transpose() * omega * r;
        add_block(ip->second, ip->second, jf.transpose() * omega * jf);
      }
      if (fq) {
        grad.segment<3>(3 * iq->second) += jt.transpose() * omega * r;
        add_block(iq->second, iq->second, jt.transpose() * omega * jt);
      }
      if (fp && fq) {
        const Eigen::Matrix3d off = jf.transpose() * omega * jt;
        add_block(ip->second, iq->second, off);
        add_block(iq->second, ip->second, off.transpose());
      }
    }
    for (const auto& p : priors) {
      const auto it = index.find(p.vertex);
      if (it == index.end()) continue;
      const Eigen::Vector3d d = prior_residual(p, cur.estimate(p.vertex));
      grad.segment<3>(3 * it->second) += p.weight * d;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) trip.emplace_back(3 * it->second + a, 3 * it->second + b, p.weight(a, b));
    }
    h.setFromTriplets(trip.begin(), trip.end());
  };

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;
  double mu = cfg.initial_damping;
  double f = res.initial_objective;
  bool relinearize = true;
  Eigen::SparseMatrix<double> damped;
  Eigen::SparseMatrix<double> eye(dim, dim);
  eye.setIdentity();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (relinearize) {
      linearize(res.graph);
      if (grad.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance) break;
      relinearize = false;
    }
    damped = h + mu * eye;
    if (!analyzed) {
      solver.analyzePattern(damped);
      analyzed = true;
    }
    solver.factorize(damped);
    LMIteration rec;
    rec.iter = it;
    rec.damping = mu;
    if (solver.info() != Eigen::Success) {
      rec.objective = f;
      res.log.push_back(rec);
      mu *= cfg.damping_up;
      if (mu > cfg.max_damping) throw SingularNormalEquations("damping overflow in LM");
      continue;
    }
    const Eigen::VectorXd delta = solver.solve(-grad);
    rec.step_norm = delta.norm();
    PoseGraph trial = res.graph;
    for (std::size_t k = 0; k < free_ids.size(); ++k) {
      Pose2& x = trial.vertices.at(free_ids[k]).estimate;
      x = Pose2(x.x + delta[3 * k], x.y + delta[3 * k + 1], x.theta + delta[3 * k + 2]);
    }
    const double f_trial = objective_with_priors(trial, w, priors);
    if (std::isfinite(f_trial) && f_trial < f) {
      const double rel = (f - f_trial) / std::max(f, 1e-300);
      res.graph = std::move(trial);
      f = f_trial;
      mu = std::max(mu / cfg.damping_down, 1e-15);
      rec.accepted = true;
      ++res.accepted_steps;
      relinearize = true;
      rec.objective = f;
      res.log.push_back(rec);
      if (rel < cfg.relative_decrease_tolerance) break;
    } else {
      rec.objective = f;
      res.log.push_back(rec);
      mu *= cfg.damping_up;
      if (mu > cfg.max_damping) {
        // No descent is possible at this point: the iterate is stationary to
        // machine precision.
        break;
      }
    }
  }
  res.final_objective = f;
  return res;
}

LMResult lm_refine(const PoseGraph& g, const Weights& w, const LMConfig& cfg) {
  if (g.vertices.empty()) return {g, {}, 0.0, 0.0, 0};
  return lm_solve(g, w, cfg, {g.vertices.begin()->first});
}

}  // namespace mapgo
