#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mapgo/errors.hpp"
#include "mapgo/se2.hpp"

namespace mapgo {

using VertexId = std::int64_t;

enum class EdgeOrigin : int { Odometry = 0, IntraLoop = 1, InterEstimate = 2, InterLoop = 3 };

std::string_view origin_name(EdgeOrigin o);
/// Loop closures and inter-robot constraints; everything but odometry.
inline bool is_loop_or_inter(EdgeOrigin o) { return o != EdgeOrigin::Odometry; }

/// Symmetric positive-definite 3x3 information matrix, ordered (x, y, theta)
/// as in g2o files.
class Information {
 public:
  Information() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws NonPSDInformation unless m is symmetric with positive eigenvalues.
  explicit Information(const Eigen::Matrix3d& m);
  static Information diagonal(double ixx, double iyy, double itt);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Eigen::Vector3d log_diagonal() const;

  bool operator==(const Information&) const = default;

 private:
  Eigen::Matrix3d m_;
};

struct EdgeMeasurement {
  VertexId from = 0;
  VertexId to = 0;
  Pose2 rel;
  Information info;
  EdgeOrigin origin = EdgeOrigin::Odometry;
};

/// Builds an edge, rejecting self loops.
EdgeMeasurement make_edge(VertexId from, VertexId to, const Pose2& rel, const Information& info,
                          EdgeOrigin origin);

struct Vertex {
  int robot = 0;
  std::int64_t timestep = 0;
  Pose2 estimate;
  std::optional<Pose2> truth;
};

struct Weights {
  double rotation = 1.0;
  double translation = 1.0;
};

/// Directed pose graph. A value type: copies are independent.
struct PoseGraph {
  std::map<VertexId, Vertex> vertices;
  std::vector<EdgeMeasurement> edges;

  /// Throws InvalidGraph on dangling endpoints, self loops or negative timesteps.
  void validate() const;
  bool has_ground_truth() const;

  const Pose2& estimate(VertexId id) const { return vertices.at(id).estimate; }
  /// Ground-truth relative transform of an edge.
  Pose2 true_relative(const EdgeMeasurement& e) const;
};

/// Undirected connectivity over all vertices (isolated vertices count as
/// separate components).
bool is_connected(const PoseGraph& g);

}  // namespace mapgo
