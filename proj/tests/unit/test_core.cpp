#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mapgo/g2o_io.hpp"
#include "mapgo/objective.hpp"
#include "mapgo/se2.hpp"
#include "../support/oracles.hpp"

using namespace mapgo;
using std::numbers::pi;

TEST_CASE("compose") {
  const Pose2 p(3, 4, 0.5);
  CHECK(compose(Pose2::identity(), p) == p);
  const Pose2 q = compose(Pose2(1, 0, pi / 2), Pose2(1, 0, 0));
  CHECK(q.x == doctest::Approx(1.0));
  CHECK(q.y == doctest::Approx(1.0));
  CHECK(q.theta == doctest::Approx(pi / 2));

  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const Pose2 a = oracle::random_pose(rng), b = oracle::random_pose(rng);
    const Eigen::Matrix3d m = oracle::homogeneous(a) * oracle::homogeneous(b);
    const Pose2 c = compose(a, b);
    CHECK(std::abs(c.x - m(0, 2)) < 1e-12);
    CHECK(std::abs(c.y - m(1, 2)) < 1e-12);
    CHECK(std::abs(wrap_angle(c.theta - std::atan2(m(1, 0), m(0, 0)))) < 1e-12);
    const Pose2 id = compose(a, a.inverse());
    CHECK(std::abs(id.x) < 1e-12);
    CHECK(std::abs(id.y) < 1e-12);
    CHECK(std::abs(id.theta) < 1e-12);
  }
}

TEST_CASE("angles stay in (-pi, pi]") {
  CHECK(wrap_angle(-pi) == pi);
  CHECK(wrap_angle(pi) == pi);
  CHECK(wrap_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
  CHECK(Pose2(0, 0, 7.0).theta == doctest::Approx(7.0 - 2 * pi));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int k = 0; k < 1000; ++k) {
    const double t = wrap_angle(u(rng));
    CHECK(t > -pi);
    CHECK(t <= pi);
  }
}

TEST_CASE("so2_log") {
  CHECK(so2_log(0.0) == 0.0);
  CHECK(so2_log(3 * pi / 2) == doctest::Approx(-pi / 2));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 200; ++k) {
    const double t = u(rng);
    // The dense log is ill-conditioned exactly at +-pi; the draws avoid it.
    CHECK(std::abs(so2_log(t) - oracle::rotation_log(so2_exp(t))) < 1e-10);
  }
  std::uniform_real_distribution<double> inside(-pi + 1e-9, pi);
  for (int k = 0; k < 200; ++k) {
    const double t = inside(rng);
    CHECK(so2_log(std::atan2(so2_exp(t)(1, 0), so2_exp(t)(0, 0))) == doctest::Approx(t).epsilon(1e-12));
  }
}

TEST_CASE("se2 exp and log invert each other") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2), a(-3, 3);
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector3d xi(u(rng), u(rng), k < 5 ? 1e-12 * k : a(rng));
    const Eigen::Vector3d back = se2_log(se2_exp(xi));
    CHECK((back - xi).norm() < 1e-10);
    // exp agrees with the dense matrix exponential
    Eigen::Matrix3d hat = Eigen::Matrix3d::Zero();
    hat << 0, -xi.z(), xi.x(), xi.z(), 0, xi.y(), 0, 0, 0;
    const Eigen::Matrix3d m = hat.exp();
    const Pose2 p = se2_exp(xi);
    CHECK(std::abs(p.x - m(0, 2)) < 1e-10);
    CHECK(std::abs(p.y - m(1, 2)) < 1e-10);
  }
}

TEST_CASE("edge residual") {
  const auto e = make_edge(0, 1, Pose2(1, 0, 0), Information(), EdgeOrigin::Odometry);
  CHECK(edge_residual(e, Pose2(), Pose2(1, 0, 0)).norm() == 0.0);
  std::mt19937_64 rng(13);
  for (int k = 0; k < 200; ++k) {
    const auto m = make_edge(0, 1, oracle::random_pose(rng), Information(), EdgeOrigin::IntraLoop);
    const Pose2 a = oracle::random_pose(rng), b = oracle::random_pose(rng);
    CHECK((edge_residual(m, a, b) - oracle::residual(m, a, b)).norm() < 1e-12);
  }
  CHECK_THROWS_AS(make_edge(2, 2, Pose2(), Information(), EdgeOrigin::Odometry), InvalidGraph);
}

TEST_CASE("information validation") {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = -1;
  CHECK_THROWS_AS(Information{m}, NonPSDInformation);
  m = Eigen::Matrix3d::Identity();
  m(0, 1) = 0.5;
  CHECK_THROWS_AS(Information{m}, NonPSDInformation);
  const auto d = Information::diagonal(4, 4, 4).log_diagonal();
  for (int i = 0; i < 3; ++i) CHECK(d[i] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("objective F") {
  PoseGraph g;
  g.vertices[0] = Vertex{};
  g.vertices[1] = Vertex{0, 1, Pose2(1, 0, 0.1), std::nullopt};
  g.edges.push_back(make_edge(0, 1, Pose2(1, 0, 0), Information(), EdgeOrigin::Odometry));
  CHECK(objective_F(g) == doctest::Approx(0.01).epsilon(1e-12));

  std::mt19937_64 rng(17);
  for (int k = 0; k < 30; ++k) {
    auto r = oracle::random_graph(rng, 20, 15);
    const double f = objective_F(r), o = oracle::objective(r);
    CHECK(std::abs(f - o) <= 1e-9 * std::max(1.0, o));
    const Weights w{0.7, 1.9};
    CHECK(std::abs(objective_F(r, w) - oracle::objective(r, 0.7, 1.9)) <= 1e-9 * o * 4);
    // gauge: a rigid transform of every estimate leaves F unchanged
    const Pose2 t = oracle::random_pose(rng);
    auto moved = r;
    for (auto& [id, v] : moved.vertices) v.estimate = compose(t, v.estimate);
    CHECK(std::abs(objective_F(moved) - f) <= 1e-9 * std::max(1.0, f));
    // consistent estimates give zero
    for (auto& e : r.edges) e.rel = between(r.estimate(e.from), r.estimate(e.to));
    CHECK(objective_F(r) < 1e-20);
  }
}

TEST_CASE("localization error L") {
  PoseGraph g;
  g.vertices[0] = Vertex{0, 0, Pose2(), Pose2()};
  g.vertices[1] = Vertex{0, 1, Pose2(), Pose2(1, 0, 0)};
  g.edges.push_back(make_edge(0, 1, Pose2(1, 0.1, 0), Information(), EdgeOrigin::Odometry));
  CHECK(localization_error_L(g) == doctest::Approx(0.01).epsilon(1e-12));
  g.edges[0].rel = Pose2(1, 0, 0);
  CHECK(localization_error_L(g) == 0.0);
  g.vertices[1].truth.reset();
  CHECK_THROWS_AS(localization_error_L(g), MissingGroundTruth);

  std::mt19937_64 rng(19);
  for (int k = 0; k < 30; ++k) {
    const auto r = oracle::random_graph(rng, 20, 10);
    const double l = localization_error_L(r), o = oracle::localization(r);
    CHECK(std::abs(l - o) <= 1e-9 * std::max(1.0, o));
  }
}

TEST_CASE("g2o round trip") {
  std::mt19937_64 rng(23);
  auto g = oracle::random_graph(rng, 25, 12);
  for (auto& [id, v] : g.vertices) v.robot = static_cast<int>(id % 3);
  std::stringstream ss;
  write_g2o(g, ss);
  const PoseGraph back = read_g2o(ss);
  REQUIRE(back.vertices.size() == g.vertices.size());
  REQUIRE(back.edges.size() == g.edges.size());
  for (const auto& [id, v] : g.vertices) {
    const auto& b = back.vertices.at(id);
    CHECK(b.robot == v.robot);
    CHECK(b.timestep == v.timestep);
    CHECK((b.estimate.vector() - v.estimate.vector()).norm() < 1e-9);
    REQUIRE(b.truth.has_value());
    CHECK((b.truth->vector() - v.truth->vector()).norm() < 1e-9);
  }
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    CHECK(back.edges[k].from == g.edges[k].from);
    CHECK(back.edges[k].to == g.edges[k].to);
    CHECK(back.edges[k].origin == g.edges[k].origin);
    CHECK((back.edges[k].rel.vector() - g.edges[k].rel.vector()).norm() < 1e-9);
    CHECK((back.edges[k].info.matrix() - g.edges[k].info.matrix()).norm() < 1e-9);
  }
}

TEST_CASE("g2o parsing errors and defaults") {
  std::stringstream empty;
  CHECK_THROWS_AS(read_g2o(empty), ParseError);

  std::stringstream bad("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 -1 0 0 1 0 1\n");
  try {
    read_g2o(bad);
    FAIL("expected NonPSDInformation");
  } catch (const NonPSDInformation& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::stringstream junk("VERTEX_SE2 0 0 0 0\nFOO 1 2\n");
  try {
    read_g2o(junk);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
  }

  std::stringstream plain(
      "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nVERTEX_SE2 2 2 0 0\n"
      "EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\nEDGE_SE2 0 2 2 0 0 1 0 0 1 0 1\n");
  const auto g = read_g2o(plain);
  CHECK(g.edges[0].origin == EdgeOrigin::Odometry);
  CHECK(g.edges[1].origin == EdgeOrigin::IntraLoop);
}
