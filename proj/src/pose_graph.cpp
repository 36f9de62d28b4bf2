#include "mapgo/pose_graph.hpp"

#include <cmath>
#include <queue>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace mapgo {

std::string_view origin_name(EdgeOrigin o) {
  switch (o) {
    case EdgeOrigin::Odometry: return "odometry";
    case EdgeOrigin::IntraLoop: return "intra_loop";
    case EdgeOrigin::InterEstimate: return "inter_estimate";
    case EdgeOrigin::InterLoop: return "inter_loop";
  }
  return "unknown";
}

Information::Information(const Eigen::Matrix3d& m) : m_(m) {
  if (!m.allFinite()) throw NonPSDInformation("information matrix has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw NonPSDInformation("information matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw NonPSDInformation("information matrix is not positive definite");
}

Information Information::diagonal(double ixx, double iyy, double itt) {
  return Information(Eigen::Vector3d(ixx, iyy, itt).asDiagonal().toDenseMatrix());
}

Eigen::Vector3d Information::log_diagonal() const { return m_.diagonal().array().log(); }

EdgeMeasurement make_edge(VertexId from, VertexId to, const Pose2& rel, const Information& info,
                          EdgeOrigin origin) {
  if (from == to) throw InvalidGraph("edge endpoints must differ");
  return {from, to, rel, info, origin};
}

void PoseGraph::validate() const {
  for (const auto& [id, v] : vertices)
    if (v.timestep < 0) throw InvalidGraph("negative timestep on vertex " + std::to_string(id));
  for (const auto& e : edges) {
    if (e.from == e.to) throw InvalidGraph("self loop on vertex " + std::to_string(e.from));
    if (!vertices.contains(e.from) || !vertices.contains(e.to))
      throw InvalidGraph("edge references missing vertex " + std::to_string(e.from) + "->" +
                         std::to_string(e.to));
  }
}

bool PoseGraph::has_ground_truth() const {
  for (const auto& [id, v] : vertices)
    if (!v.truth) return false;
  return true;
}

Pose2 PoseGraph::true_relative(const EdgeMeasurement& e) const {
  const auto& a = vertices.at(e.from).truth;
  const auto& b = vertices.at(e.to).truth;
  if (!a || !b) throw MissingGroundTruth("no ground truth on edge endpoints");
  return between(*a, *b);
}

bool is_connected(const PoseGraph& g) {
  if (g.vertices.empty()) return true;
  std::unordered_map<VertexId, std::vector<VertexId>> adj;
  for (const auto& e : g.edges) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::unordered_map<VertexId, bool> seen;
  std::queue<VertexId> q;
  q.push(g.vertices.begin()->first);
  seen[q.front()] = true;
  std::size_t count = 0;
  while (!q.empty()) {
    VertexId v = q.front();
    q.pop();
    ++count;
    for (VertexId w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        q.push(w);
      }
  }
  return count == g.vertices.size();
}

}  // namespace mapgo
