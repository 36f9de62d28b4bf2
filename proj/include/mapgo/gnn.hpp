#pragma once

// Edge-conditioned message passing with hard-concrete edge gates.
//
// Every edge (p, q) becomes two arcs, q -> p and p -> q, that share the
// edge-conditioned operator W_pq = reshape(phi(a_pq)) and the gate z_pq.
// A node averages the messages of its incoming arcs and updates as
// sigmoid(A [h || mean m]).

#include <cstdint>
#include <optional>
#include <vector>

#include "mapgo/autodiff.hpp"
#include "mapgo/nn.hpp"
#include "mapgo/pose_graph.hpp"

namespace mapgo {

inline constexpr int kEdgeAttrDim = 11;
inline constexpr int kNodeFeatDim = 8;
/// Node positions are centred per graph and divided by this (meters).
inline constexpr double kPositionScale = 10.0;

using EdgeAttributes = Eigen::Matrix<double, kEdgeAttrDim, 1>;

/// [one-hot origin (4), log diag Lambda (3), timestep separation, |t~|,
///  sin th~, cos th~].
EdgeAttributes edge_attributes(const EdgeMeasurement& e, std::int64_t separation);
EdgeAttributes edge_attributes(const PoseGraph& g, const EdgeMeasurement& e);

struct GateConfig {
  double a = -0.1;
  double b = 1.1;
  double temperature = 1.0;
  double beta_interloop = 1.0;
  double l1_weight = 1e-3;
  double threshold = 0.5;

  void validate() const;
};

/// min(1, max((b - a) u + a, 0)).
double stretch_clip(double u, const GateConfig& cfg);
/// Hard-concrete gate for logit alpha and noise eps in (0, 1).
double gate_value(double alpha, double eps, const GateConfig& cfg);
double l1_gate_penalty(const std::vector<double>& gates, double lambda);

/// Dense inputs of one graph, or of a disjoint union of graphs.
struct GraphTensors {
  int num_nodes = 0;
  int num_edges = 0;
  int num_graphs = 1;
  ad::Mat node_features;  // N x kNodeFeatDim
  ad::Mat edge_attrs;     // E x kEdgeAttrDim
  ad::Mat residuals;      // E x 3, (rotation, tx, ty) at the current estimates
  ad::Mat log_info;       // E x 3
  ad::Mat interloop;      // E x 1 indicator
  ad::IndexPtr arc_src, arc_dst;  // 2E arcs: arc e is to -> from, arc E + e is from -> to
  ad::IndexPtr node_graph;        // graph of every node
  ad::IndexPtr edge_graph;        // graph of every edge
  std::vector<VertexId> vertex_ids;  // node order (vertex-id order per graph)
};

GraphTensors graph_tensors(const PoseGraph& g);
/// Disjoint union; node and edge blocks keep the input order.
GraphTensors batch_graphs(const std::vector<const GraphTensors*>& parts);

enum class GateMode { Sample, Deterministic };

struct EccConfig {
  int layers = 5;
  int hidden = 128;
  int edge_hidden = 32;
  int gate_hidden = 32;
  bool gates = true;
  /// Independent gates per layer instead of layer-1 gates shared by all.
  bool per_layer_gates = false;
  GateConfig gate;
};

struct EccLayer {
  int in = 0, out = 0;
  nn::Mlp edge_net;  // kEdgeAttrDim -> out * in
  nn::Linear update;  // (in + out) -> out
  std::optional<nn::Mlp> gate_net;  // out + 6 -> 1
};

struct EccOutput {
  ad::Var nodes;    // N x hidden
  ad::Var latent;   // num_graphs x hidden
  ad::Var gates;    // E x 1 (mean over layers in per-layer mode)
  ad::Var logits;   // E x 1, the gate logits alpha (first gated layer)
  std::vector<ad::Var> layer_gates;
};

class EccEncoder {
 public:
  EccEncoder() = default;
  EccEncoder(const std::string& name, const EccConfig& cfg, nn::Rng& rng);

  /// mode picks the gate noise: eps ~ U(0, 1) from rng, or eps = 0.5.
  /// fixed_gates (E x 1) bypasses the gate networks entirely.
  EccOutput forward(ad::Tape& t, const GraphTensors& g, GateMode mode, nn::Rng* rng = nullptr,
                    const ad::Mat* fixed_gates = nullptr);
  /// Deterministic per-edge gates without recording gradients.
  std::vector<double> gate_values(const GraphTensors& g);

  const EccConfig& config() const { return cfg_; }
  EccConfig& config() { return cfg_; }
  std::vector<EccLayer>& layers() { return layers_; }
  void collect(std::vector<ad::Parameter*>& out);

 private:
  EccConfig cfg_;
  std::vector<EccLayer> layers_;
};

/// Hard-concrete gate on the tape. Gradient flows straight through the clip.
ad::Var gate_forward(ad::Var alpha, const ad::Mat& eps, const GateConfig& cfg);

struct PruneResult {
  PoseGraph graph;
  std::vector<std::size_t> removed;  // sorted edge indices
};

/// Drops non-odometry edges whose gate is below threshold.
PruneResult prune(const PoseGraph& g, const std::vector<double>& gates, double threshold);

}  // namespace mapgo
