#pragma once

// Per-edge loop re-implementation of the encoder forward pass, reading the
// parameter values directly. Shares no code with the tape version.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mapgo/gnn.hpp"

namespace oracle {

inline Eigen::VectorXd mlp(const mapgo::nn::Mlp& m, Eigen::VectorXd x) {
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& l = m.layers[k];
    Eigen::VectorXd y = l.bias.value.row(0).transpose();
    for (int i = 0; i < l.weight.value.rows(); ++i)
      for (int j = 0; j < l.weight.value.cols(); ++j) y(j) += x(i) * l.weight.value(i, j);
    if (k + 1 < m.layers.size())
      for (int j = 0; j < y.size(); ++j) y(j) = std::tanh(y(j));
    x = y;
  }
  return x;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct EccResult {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd latent;
  std::vector<double> gates;
};

/// Deterministic gates (eps = 0.5) unless `fixed` is given.
inline EccResult ecc_forward(mapgo::EccEncoder& enc, const mapgo::GraphTensors& g,
                             const std::vector<double>* fixed = nullptr) {
  const auto& cfg = enc.config();
  const int n = g.num_nodes, e_n = g.num_edges;
  Eigen::MatrixXd h = g.node_features;
  std::vector<double> z(e_n, 1.0);
  if (fixed) z = *fixed;
  std::vector<std::vector<double>> per_layer;
  for (auto& layer : enc.layers()) {
    std::vector<Eigen::VectorXd> msg_fwd(e_n), msg_rev(e_n);
    for (int k = 0; k < e_n; ++k) {
      const Eigen::VectorXd w = mlp(layer.edge_net, g.edge_attrs.row(k).transpose());
      Eigen::MatrixXd wm(layer.out, layer.in);
      for (int r = 0; r < layer.out; ++r)
        for (int c = 0; c < layer.in; ++c) wm(r, c) = w(r * layer.in + c);
      msg_fwd[k] = wm * h.row((*g.arc_src)[k]).transpose();
      msg_rev[k] = wm * h.row((*g.arc_src)[e_n + k]).transpose();
    }
    if (!fixed && layer.gate_net) {
      std::vector<double> zl(e_n);
      for (int k = 0; k < e_n; ++k) {
        Eigen::VectorXd s(layer.out + 6);
        s << 0.5 * (msg_fwd[k] + msg_rev[k]), g.residuals.row(k).transpose(), g.log_info.row(k).transpose();
        const double alpha = mlp(*layer.gate_net, s)(0) + cfg.gate.beta_interloop * g.interloop(k, 0);
        const double u = logistic(alpha / cfg.gate.temperature);  // eps = 0.5 adds log(1) = 0
        zl[k] = std::min(1.0, std::max((cfg.gate.b - cfg.gate.a) * u + cfg.gate.a, 0.0));
      }
      z = zl;
      per_layer.push_back(zl);
    }
    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(n, layer.out);
    std::vector<int> deg(n, 0);
    for (int k = 0; k < e_n; ++k) {
      agg.row((*g.arc_dst)[k]) += z[k] * msg_fwd[k].transpose();
      agg.row((*g.arc_dst)[e_n + k]) += z[k] * msg_rev[k].transpose();
      ++deg[(*g.arc_dst)[k]];
      ++deg[(*g.arc_dst)[e_n + k]];
    }
    Eigen::MatrixXd next(n, layer.out);
    for (int i = 0; i < n; ++i) {
      if (deg[i] > 0) agg.row(i) /= deg[i];
      Eigen::VectorXd cat(layer.in + layer.out);
      cat << h.row(i).transpose(), agg.row(i).transpose();
      for (int j = 0; j < layer.out; ++j) {
        double s = layer.update.bias.value(0, j);
        for (int r = 0; r < cat.size(); ++r) s += cat(r) * layer.update.weight.value(r, j);
        next(i, j) = logistic(s);
      }
    }
    h = next;
  }
  EccResult res;
  res.nodes = h;
  res.latent = h.colwise().mean().transpose();
  if (fixed) {
    res.gates = *fixed;
  } else if (!per_layer.empty()) {
    res.gates.assign(e_n, 0.0);
    for (const auto& zl : per_layer)
      for (int k = 0; k < e_n; ++k) res.gates[k] += zl[k] / per_layer.size();
  } else {
    res.gates.assign(e_n, 1.0);
  }
  return res;
}

}  // namespace oracle
