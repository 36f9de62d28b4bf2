#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They work on homogeneous matrices and plain loops so they share no
// code path with the library besides the data types.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "mapgo/pose_graph.hpp"

namespace oracle {

inline Eigen::Matrix3d homogeneous(double x, double y, double th) {
  Eigen::Matrix3d m;
  m << std::cos(th), -std::sin(th), x, std::sin(th), std::cos(th), y, 0, 0, 1;
  return m;
}

inline Eigen::Matrix3d homogeneous(const mapgo::Pose2& p) { return homogeneous(p.x, p.y, p.theta); }

/// Angle of a 2x2 rotation through the dense matrix logarithm.
inline double rotation_log(const Eigen::Matrix2d& r) {
  const Eigen::Matrix2d l = r.log();
  return l(1, 0);
}

/// Residual of one edge from Eq.-1 style dense terms: (rotation, tx, ty).
inline Eigen::Vector3d residual(const mapgo::EdgeMeasurement& e, const mapgo::Pose2& xp,
                                const mapgo::Pose2& xq) {
  const Eigen::Matrix3d tp = homogeneous(xp), tq = homogeneous(xq), tm = homogeneous(e.rel);
  const Eigen::Matrix2d rp = tp.topLeftCorner<2, 2>(), rq = tq.topLeftCorner<2, 2>();
  const Eigen::Matrix2d rm = tm.topLeftCorner<2, 2>();
  Eigen::Vector3d r;
  r(0) = rotation_log(rm.transpose() * rp.transpose() * rq);
  r.tail<2>() = rp.transpose() * (tq.topRightCorner<2, 1>() - tp.topRightCorner<2, 1>()) -
                tm.topRightCorner<2, 1>();
  return r;
}

inline double objective(const mapgo::PoseGraph& g, double wr = 1.0, double wt = 1.0) {
  double f = 0.0;
  for (const auto& e : g.edges) {
    const Eigen::Vector3d r = residual(e, g.vertices.at(e.from).estimate, g.vertices.at(e.to).estimate);
    f += wr * wr * r(0) * r(0) + wt * wt * (r(1) * r(1) + r(2) * r(2));
  }
  return f;
}

/// L from the homogeneous relative transforms: discrepancy of measured vs
/// true relative pose in (x, y, theta), weighted by the information matrix.
inline double localization(const mapgo::PoseGraph& g) {
  double l = 0.0;
  for (const auto& e : g.edges) {
    const Eigen::Matrix3d truth =
        homogeneous(*g.vertices.at(e.from).truth).inverse() * homogeneous(*g.vertices.at(e.to).truth);
    const Eigen::Matrix3d meas = homogeneous(e.rel);
    Eigen::Vector3d r;
    r(0) = meas(0, 2) - truth(0, 2);
    r(1) = meas(1, 2) - truth(1, 2);
    const Eigen::Matrix2d dr = truth.topLeftCorner<2, 2>().transpose() * meas.topLeftCorner<2, 2>();
    r(2) = rotation_log(dr);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) l += r(a) * e.info.matrix()(a, b) * r(b);
  }
  return l;
}

inline Eigen::Matrix3d random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = u(rng);
  return a * a.transpose() + 0.5 * Eigen::Matrix3d::Identity();
}

inline mapgo::Pose2 random_pose(std::mt19937_64& rng, double span = 5.0) {
  std::uniform_real_distribution<double> u(-span, span), a(-3.1, 3.1);
  return {u(rng), u(rng), a(rng)};
}

/// Connected random graph: a chain plus `extra` random chords, random
/// estimates, truths and SPD information.
inline mapgo::PoseGraph random_graph(std::mt19937_64& rng, int n, int extra) {
  mapgo::PoseGraph g;
  for (int i = 0; i < n; ++i) {
    mapgo::Vertex v;
    v.timestep = i;
    v.estimate = random_pose(rng);
    v.truth = random_pose(rng);
    g.vertices.emplace(i, v);
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_int_distribution<int> origin(0, 3);
  auto add = [&](int a, int b, mapgo::EdgeOrigin o) {
    g.edges.push_back(mapgo::make_edge(a, b, random_pose(rng, 2.0), mapgo::Information(random_spd(rng)), o));
  };
  for (int i = 0; i + 1 < n; ++i) add(i, i + 1, mapgo::EdgeOrigin::Odometry);
  for (int k = 0; k < extra && n > 1; ++k) {
    int a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    add(a, b, static_cast<mapgo::EdgeOrigin>(1 + origin(rng) % 3));
  }
  return g;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        Eigen::VectorXd x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Dense Newton minimization with finite-difference gradient and Hessian.
inline Eigen::VectorXd newton_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                                       Eigen::VectorXd x, int iters = 50) {
  const int n = static_cast<int>(x.size());
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd g = numeric_gradient(f, x, 1e-6);
    Eigen::MatrixXd h(n, n);
    const double step = 1e-4;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      h.col(i) = (numeric_gradient(f, xp, 1e-6) - numeric_gradient(f, xm, 1e-6)) / (2 * step);
    }
    h = 0.5 * (h + h.transpose());
    Eigen::VectorXd dx = h.ldlt().solve(-g);
    double t = 1.0;
    const double f0 = f(x);
    while (t > 1e-8 && f(x + t * dx) > f0) t *= 0.5;
    x += t * dx;
    if (dx.norm() * t < 1e-13) break;
  }
  return x;
}

}  // namespace oracle
