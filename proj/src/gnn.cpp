#include "mapgo/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "mapgo/objective.hpp"

namespace mapgo {

using ad::Mat;
using ad::Tape;
using ad::Var;

EdgeAttributes edge_attributes(const EdgeMeasurement& e, std::int64_t separation) {
  EdgeAttributes a = EdgeAttributes::Zero();
  a(static_cast<int>(e.origin)) = 1.0;
  a.segment<3>(4) = e.info.log_diagonal();
  a(7) = static_cast<double>(separation < 0 ? -separation : separation);
  a(8) = std::hypot(e.rel.x, e.rel.y);
  a(9) = std::sin(e.rel.theta);
  a(10) = std::cos(e.rel.theta);
  return a;
}

EdgeAttributes edge_attributes(const PoseGraph& g, const EdgeMeasurement& e) {
  return edge_attributes(e, g.vertices.at(e.to).timestep - g.vertices.at(e.from).timestep);
}

void GateConfig::validate() const {
  if (!(a < 0.0 && b > 1.0)) throw InvalidSpec("gate stretch interval must satisfy a < 0 < 1 < b");
  if (!(temperature > 0.0)) throw InvalidSpec("gate temperature must be > 0");
  if (!(l1_weight >= 0.0)) throw InvalidSpec("gate l1 weight must be >= 0");
}

double stretch_clip(double u, const GateConfig& cfg) {
  // Interpolating keeps u = 0, 0.5, 1 exact; (b - a) * u + a is an ulp off at 0.5.
  return std::min(1.0, std::max(u * cfg.b + (1.0 - u) * cfg.a, 0.0));
}

double gate_value(double alpha, double eps, const GateConfig& cfg) {
  const double s = (alpha + std::log(eps) - std::log1p(-eps)) / cfg.temperature;
  const double u = s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  return stretch_clip(u, cfg);
}

double l1_gate_penalty(const std::vector<double>& gates, double lambda) {
  double s = 0.0;
  for (double z : gates) s += std::abs(z);
  return lambda * s;
}

Var gate_forward(Var alpha, const Mat& eps, const GateConfig& cfg) {
  Tape& t = *alpha.tape;
  const Mat noise = (eps.array().log() - (1.0 - eps.array()).log()).matrix();
  Var u = ad::sigmoid(ad::scale(ad::add(alpha, t.constant(noise)), 1.0 / cfg.temperature));
  const Var low = ad::add_scalar(ad::scale(u, -cfg.a), cfg.a);
  return ad::clamp_st(ad::add(ad::scale(u, cfg.b), low), 0.0, 1.0);
}

GraphTensors graph_tensors(const PoseGraph& g) {
  GraphTensors out;
  out.num_nodes = static_cast<int>(g.vertices.size());
  out.num_edges = static_cast<int>(g.edges.size());
  out.node_features = Mat::Zero(out.num_nodes, kNodeFeatDim);
  std::map<VertexId, int> row;
  Eigen::Vector2d centre = Eigen::Vector2d::Zero();
  for (const auto& [id, v] : g.vertices) {
    row.emplace(id, static_cast<int>(out.vertex_ids.size()));
    out.vertex_ids.push_back(id);
    centre += Eigen::Vector2d(v.estimate.x, v.estimate.y);
  }
  if (out.num_nodes > 0) centre /= out.num_nodes;
  for (const auto& [id, v] : g.vertices) {
    const int i = row.at(id);
    out.node_features(i, 0) = (v.estimate.x - centre.x()) / kPositionScale;
    out.node_features(i, 1) = (v.estimate.y - centre.y()) / kPositionScale;
    out.node_features(i, 2) = std::sin(v.estimate.theta);
    out.node_features(i, 3) = std::cos(v.estimate.theta);
  }
  const int e_n = out.num_edges;
  out.edge_attrs.resize(e_n, kEdgeAttrDim);
  out.residuals.resize(e_n, 3);
  out.log_info.resize(e_n, 3);
  out.interloop.resize(e_n, 1);
  ad::Index src(2 * e_n), dst(2 * e_n);
  for (int k = 0; k < e_n; ++k) {
    const auto& e = g.edges[k];
    out.edge_attrs.row(k) = edge_attributes(g, e).transpose();
    out.residuals.row(k) = edge_residual(e, g.estimate(e.from), g.estimate(e.to)).transpose();
    out.log_info.row(k) = e.info.log_diagonal().transpose();
    out.interloop(k, 0) = e.origin == EdgeOrigin::InterLoop ? 1.0 : 0.0;
    const int p = row.at(e.from), q = row.at(e.to);
    src[k] = q;
    dst[k] = p;
    src[e_n + k] = p;
    dst[e_n + k] = q;
  }
  out.arc_src = std::make_shared<const ad::Index>(std::move(src));
  out.arc_dst = std::make_shared<const ad::Index>(std::move(dst));
  out.node_graph = std::make_shared<const ad::Index>(out.num_nodes, 0);
  out.edge_graph = std::make_shared<const ad::Index>(e_n, 0);
  return out;
}

GraphTensors batch_graphs(const std::vector<const GraphTensors*>& parts) {
  GraphTensors out;
  out.num_graphs = 0;
  for (const auto* p : parts) {
    out.num_nodes += p->num_nodes;
    out.num_edges += p->num_edges;
    out.num_graphs += p->num_graphs;
  }
  out.node_features.resize(out.num_nodes, kNodeFeatDim);
  out.edge_attrs.resize(out.num_edges, kEdgeAttrDim);
  out.residuals.resize(out.num_edges, 3);
  out.log_info.resize(out.num_edges, 3);
  out.interloop.resize(out.num_edges, 1);
  ad::Index fwd_src, fwd_dst, rev_src, rev_dst, node_graph, edge_graph;
  int n0 = 0, e0 = 0, g0 = 0;
  for (const auto* p : parts) {
    out.node_features.middleRows(n0, p->num_nodes) = p->node_features;
    out.edge_attrs.middleRows(e0, p->num_edges) = p->edge_attrs;
    out.residuals.middleRows(e0, p->num_edges) = p->residuals;
    out.log_info.middleRows(e0, p->num_edges) = p->log_info;
    out.interloop.middleRows(e0, p->num_edges) = p->interloop;
    for (int k = 0; k < p->num_edges; ++k) {
      fwd_src.push_back((*p->arc_src)[k] + n0);
      fwd_dst.push_back((*p->arc_dst)[k] + n0);
      rev_src.push_back((*p->arc_src)[p->num_edges + k] + n0);
      rev_dst.push_back((*p->arc_dst)[p->num_edges + k] + n0);
      edge_graph.push_back((*p->edge_graph)[k] + g0);
    }
    for (int i = 0; i < p->num_nodes; ++i) node_graph.push_back((*p->node_graph)[i] + g0);
    out.vertex_ids.insert(out.vertex_ids.end(), p->vertex_ids.begin(), p->vertex_ids.end());
    n0 += p->num_nodes;
    e0 += p->num_edges;
    g0 += p->num_graphs;
  }
  fwd_src.insert(fwd_src.end(), rev_src.begin(), rev_src.end());
  fwd_dst.insert(fwd_dst.end(), rev_dst.begin(), rev_dst.end());
  out.arc_src = std::make_shared<const ad::Index>(std::move(fwd_src));
  out.arc_dst = std::make_shared<const ad::Index>(std::move(fwd_dst));
  out.node_graph = std::make_shared<const ad::Index>(std::move(node_graph));
  out.edge_graph = std::make_shared<const ad::Index>(std::move(edge_graph));
  return out;
}

EccEncoder::EccEncoder(const std::string& name, const EccConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  cfg_.gate.validate();
  if (cfg.layers < 1 || cfg.hidden < 1) throw InvalidSpec("encoder needs at least one layer of positive width");
  for (int l = 0; l < cfg.layers; ++l) {
    EccLayer layer;
    layer.in = l == 0 ? kNodeFeatDim : cfg.hidden;
    layer.out = cfg.hidden;
    const std::string p = name + ".layer" + std::to_string(l);
    layer.edge_net = nn::Mlp(p + ".edge", {kEdgeAttrDim, cfg.edge_hidden, layer.out * layer.in}, rng);
    layer.update = nn::Linear(p + ".update", layer.in + layer.out, layer.out, rng);
    if (cfg.gates && (l == 0 || cfg.per_layer_gates))
      layer.gate_net = nn::Mlp(p + ".gate", {layer.out + 6, cfg.gate_hidden, 1}, rng);
    layers_.push_back(std::move(layer));
  }
}

EccOutput EccEncoder::forward(Tape& t, const GraphTensors& g, GateMode mode, nn::Rng* rng, const Mat* fixed_gates) {
  if (mode == GateMode::Sample && !rng && !fixed_gates && cfg_.gates)
    throw std::invalid_argument("sampled gates need a generator");
  EccOutput out;
  const int e_n = g.num_edges;
  Var h = t.constant(g.node_features);
  Var attrs = t.constant(g.edge_attrs);
  Var cues = t.constant(Mat(e_n, 6));
  if (e_n > 0) {
    Mat c(e_n, 6);
    c << g.residuals, g.log_info;
    cues = t.constant(std::move(c));
  }
  std::optional<Var> z;
  if (fixed_gates) z = t.constant(*fixed_gates);
  std::vector<Var> gates;

  for (auto& layer : layers_) {
    Var agg = t.constant(Mat::Zero(g.num_nodes, layer.out));
    if (e_n > 0) {
      Var w = layer.edge_net(t, attrs);                         // E x out*in
      Var msg = ad::edge_matvec(w, ad::gather_rows(h, g.arc_src), layer.out);  // 2E x out, arcs share w
      if (!fixed_gates && layer.gate_net) {
        // One reliability score per edge from the mean of its two arc messages.
        Var m_edge = ad::scale(ad::add(ad::slice_rows(msg, 0, e_n), ad::slice_rows(msg, e_n, e_n)), 0.5);
        Var alpha = ad::add((*layer.gate_net)(t, ad::concat_cols({m_edge, cues})),
                            t.constant(cfg_.gate.beta_interloop * g.interloop));
        Mat eps = Mat::Constant(e_n, 1, 0.5);
        if (mode == GateMode::Sample) {
          std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
          for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = u(*rng);
        }
        if (gates.empty()) out.logits = alpha;
        z = gate_forward(alpha, eps, cfg_.gate);
        gates.push_back(*z);
      }
      if (z) msg = ad::mul_rows(msg, ad::concat_rows({*z, *z}));
      agg = ad::scatter_mean_rows(msg, g.arc_dst, g.num_nodes);
    }
    h = ad::sigmoid(layer.update(t, ad::concat_cols({h, agg})));
  }
  out.nodes = h;
  out.latent = ad::scatter_mean_rows(h, g.node_graph, g.num_graphs);
  out.layer_gates = gates;
  if (fixed_gates) {
    out.gates = *z;
  } else if (gates.empty()) {
    out.gates = t.constant(Mat::Ones(e_n, 1));
  } else if (gates.size() == 1) {
    out.gates = gates.front();
  } else {
    Var s = gates.front();
    for (std::size_t k = 1; k < gates.size(); ++k) s = ad::add(s, gates[k]);
    out.gates = ad::scale(s, 1.0 / static_cast<double>(gates.size()));
  }
  return out;
}

std::vector<double> EccEncoder::gate_values(const GraphTensors& g) {
  Tape t(false);
  const EccOutput o = forward(t, g, GateMode::Deterministic);
  const Mat& v = o.gates.value();
  return {v.data(), v.data() + v.size()};
}

void EccEncoder::collect(std::vector<ad::Parameter*>& out) {
  for (auto& l : layers_) {
    l.edge_net.collect(out);
    l.update.collect(out);
    if (l.gate_net) l.gate_net->collect(out);
  }
}

PruneResult prune(const PoseGraph& g, const std::vector<double>& gates, double threshold) {
  if (gates.size() != g.edges.size()) throw std::invalid_argument("prune: one gate per edge required");
  PruneResult res;
  res.graph.vertices = g.vertices;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    if (g.edges[k].origin != EdgeOrigin::Odometry && gates[k] < threshold) res.removed.push_back(k);
    else res.graph.edges.push_back(g.edges[k]);
  }
  return res;
}

}  // namespace mapgo
