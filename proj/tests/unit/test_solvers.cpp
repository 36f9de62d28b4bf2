#include <random>

#include "doctest.h"
#include "mapgo/admm.hpp"
#include "mapgo/lm.hpp"
#include "mapgo/objective.hpp"
#include "mapgo/synthetic.hpp"
#include "../support/oracles.hpp"

using namespace mapgo;

namespace {

PoseGraph three_pose_loop(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  PoseGraph g;
  const Pose2 truth[3] = {Pose2(0, 0, 0), Pose2(1, 0, 1.2), Pose2(0.4, 0.9, 2.5)};
  for (int i = 0; i < 3; ++i) g.vertices[i] = Vertex{0, i, truth[i], truth[i]};
  auto meas = [&](int a, int b) {
    const Pose2 r = between(truth[a], truth[b]);
    return Pose2(r.x + n(rng), r.y + n(rng), r.theta + n(rng));
  };
  g.edges.push_back(make_edge(0, 1, meas(0, 1), Information(), EdgeOrigin::Odometry));
  g.edges.push_back(make_edge(1, 2, meas(1, 2), Information(), EdgeOrigin::Odometry));
  g.edges.push_back(make_edge(2, 0, meas(2, 0), Information(), EdgeOrigin::IntraLoop));
  g.vertices[2].estimate = Pose2(0.7, 1.3, 2.0);
  return g;
}

// F over the free vertices 1, 2 with vertex 0 held.
double toy_objective(const PoseGraph& g, const Eigen::VectorXd& x) {
  PoseGraph h = g;
  h.vertices[1].estimate = Pose2(x[0], x[1], x[2]);
  h.vertices[2].estimate = Pose2(x[3], x[4], x[5]);
  return oracle::objective(h);
}

}  // namespace

TEST_CASE("edge Jacobians match finite differences") {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 20; ++k) {
    const auto e = make_edge(0, 1, oracle::random_pose(rng, 2), Information(), EdgeOrigin::IntraLoop);
    const Pose2 a = oracle::random_pose(rng), b = oracle::random_pose(rng);
    Eigen::Matrix3d jf, jt;
    edge_jacobians(e, a, b, jf, jt);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6;
      Eigen::Vector3d da = Eigen::Vector3d::Zero();
      da[c] = h;
      auto shift = [](const Pose2& p, const Eigen::Vector3d& d) { return Pose2(p.x + d.x(), p.y + d.y(), p.theta + d.z()); };
      const Eigen::Vector3d nf = (edge_residual(e, shift(a, da), b) - edge_residual(e, shift(a, -da), b)) / (2 * h);
      const Eigen::Vector3d nt = (edge_residual(e, a, shift(b, da)) - edge_residual(e, a, shift(b, -da))) / (2 * h);
      CHECK((nf - jf.col(c)).norm() <= 1e-4 * std::max(1.0, nf.norm()));
      CHECK((nt - jt.col(c)).norm() <= 1e-4 * std::max(1.0, nt.norm()));
    }
  }
}

TEST_CASE("LM on a noise-free graph at ground truth") {
  GenSpec spec;
  spec.profile = {0, 0, 0};
  spec.poses_per_robot = 20;
  auto g = generate(spec);
  for (auto& [id, v] : g.vertices) v.estimate = *v.truth;
  const auto res = lm_refine(g);
  CHECK(res.accepted_steps == 0);
  CHECK(res.final_objective < 1e-20);
}

TEST_CASE("LM matches the dense Newton oracle on the 3-pose loop") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const PoseGraph g = three_pose_loop(s);
    const auto res = lm_refine(g);
    Eigen::VectorXd x0(6);
    x0 << g.estimate(1).x, g.estimate(1).y, g.estimate(1).theta, g.estimate(2).x, g.estimate(2).y,
        g.estimate(2).theta;
    const Eigen::VectorXd xs = oracle::newton_minimize([&](const Eigen::VectorXd& x) { return toy_objective(g, x); }, x0);
    CHECK(std::abs(res.final_objective - toy_objective(g, xs)) < 1e-10);
    CHECK(res.graph.estimate(0) == g.estimate(0));
  }
}

TEST_CASE("LM monotone on V2 graphs with bit-exact anchor") {
  GenSpec spec;
  spec.n_robots = 2;
  spec.poses_per_robot = 50;
  spec.profile = NoiseProfile::V2();
  for (std::uint64_t s = 0; s < 3; ++s) {
    spec.seed = s;
    const PoseGraph g = generate(spec);
    const auto res = lm_refine(g);
    double prev = res.initial_objective;
    for (const auto& it : res.log) {
      CHECK(it.objective <= prev);
      if (it.accepted) CHECK(it.objective < prev);
      prev = it.objective;
    }
    CHECK(res.final_objective < res.initial_objective);
    // same basin as a solve started from ground truth
    auto t = g;
    for (auto& [id, v] : t.vertices) v.estimate = *v.truth;
    CHECK(res.final_objective == doctest::Approx(lm_refine(t).final_objective).epsilon(1e-6));
    CHECK(res.graph.estimate(0) == g.estimate(0));
    CHECK(res.final_objective == doctest::Approx(objective_F(res.graph)).epsilon(1e-12));
  }
}

TEST_CASE("vertex information is the Hessian diagonal block") {
  std::mt19937_64 rng(43);
  const auto g = oracle::random_graph(rng, 8, 6);
  const VertexId v = 3;
  const Eigen::Matrix3d h = vertex_information(g, {}, v);
  // Gauss-Newton block equals the exact Hessian block at a zero-residual point.
  auto consistent = g;
  for (auto& e : consistent.edges) e.rel = between(consistent.estimate(e.from), consistent.estimate(e.to));
  const Eigen::Matrix3d hc = vertex_information(consistent, {}, v);
  auto f = [&](const Eigen::VectorXd& x) {
    auto t = consistent;
    t.vertices[v].estimate = Pose2(x[0], x[1], x[2]);
    return oracle::objective(t);
  };
  const Pose2 p = consistent.estimate(v);
  Eigen::VectorXd x0(3);
  x0 << p.x, p.y, p.theta;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp[c] += 1e-4;
    xm[c] -= 1e-4;
    const Eigen::VectorXd col = (oracle::numeric_gradient(f, xp) - oracle::numeric_gradient(f, xm)) / 2e-4;
    CHECK((col - hc.col(c)).norm() < 1e-4 * std::max(1.0, col.norm()));
  }
  CHECK((h - h.transpose()).norm() < 1e-12);
}

namespace {

// A = {0, 2} with `wa` parallel edges 0->2, B = {1, 2} with `wb` edges 1->2.
// A wants vertex 2 at (1, 0, 0), B at (1 + 2 * half_gap, 0, 0).
Partition two_robot_toy(int wa, int wb, double half_gap, bool start_at_optimum = false) {
  PoseGraph g;
  g.vertices[0] = Vertex{0, 0, Pose2(0, 0, 0), std::nullopt};
  g.vertices[1] = Vertex{1, 0, Pose2(0, 1, 0), std::nullopt};
  g.vertices[2] = Vertex{0, 1, Pose2(1.0, 0.0, 0.0), std::nullopt};
  for (int k = 0; k < wa; ++k) g.edges.push_back(make_edge(0, 2, Pose2(1, 0, 0), Information(), EdgeOrigin::Odometry));
  for (int k = 0; k < wb; ++k)
    g.edges.push_back(make_edge(1, 2, Pose2(1 + 2 * half_gap, -1, 0), Information(), EdgeOrigin::InterLoop));
  Partition p = build_partition(g, {0, 1, 0}, 2);
  if (!start_at_optimum) p.subgraphs[1].vertices.at(2).estimate = Pose2(1 + 2 * half_gap, 0, 0);
  return p;
}

}  // namespace

TEST_CASE("weighted pose mean") {
  const Eigen::Matrix3d a = Eigen::Vector3d(4, 1, 1).asDiagonal(), b = Eigen::Matrix3d::Identity();
  const Pose2 m = weighted_pose_mean({Pose2(1, 0, 0), Pose2(2, 0, 0)}, {a, b});
  CHECK(m.x == doctest::Approx(1.2).epsilon(1e-12));
  const Pose2 w = weighted_pose_mean({Pose2(0, 0, 3.0416), Pose2(0, 0, -3.0416)}, {b, b});
  CHECK(std::abs(std::abs(w.theta) - 3.14159265358979) < 1e-9);
}

TEST_CASE("ADMM toy consensus") {
  SUBCASE("identical duplicates converge in one round") {
    const auto r = admm_consensus(two_robot_toy(1, 1, 0.0, true));
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK((r.resolved.at(2).vector() - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("equal information gives the midpoint") {
    const auto r = admm_consensus(two_robot_toy(1, 1, 0.1));
    CHECK(r.converged);
    CHECK(std::abs(r.resolved.at(2).x - 1.1) < 1e-6);
  }
  SUBCASE("4:1 information gives the weighted mean") {
    const auto r = admm_consensus(two_robot_toy(4, 1, 0.1));
    CHECK(r.converged);
    CHECK(std::abs(r.resolved.at(2).x - (4 * 1.0 + 1.2) / 5) < 1e-6);
    CHECK(std::abs(r.resolved.at(2).y) < 1e-6);
  }
}

TEST_CASE("ADMM on partitioned synthetic graphs") {
  GenSpec spec;
  spec.poses_per_robot = 20;
  for (std::uint64_t s = 0; s < 4; ++s) {
    spec.seed = s;
    const PoseGraph g = generate(spec);
    const Partition p = partition(g, 3);
    const auto r = admm_consensus(p);
    CHECK(r.converged);
    CHECK(r.disagreement.back() < 1e-6);
    const PoseGraph m = merge(r.partition, r.resolved);
    CHECK(objective_F(m) < objective_F(g));
    for (const auto& [v, copies] : r.partition.separators)
      for (auto [robot, local] : copies)
        CHECK(r.partition.subgraphs[robot].estimate(local) == r.resolved.at(v));
  }
}
