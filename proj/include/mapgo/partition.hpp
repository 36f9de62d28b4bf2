#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mapgo/pose_graph.hpp"

namespace mapgo {

/// Per-robot subgraphs of a global pose graph. Subgraphs keep global vertex
/// ids, so the local id of a separator copy equals its global id.
struct Partition {
  std::vector<PoseGraph> subgraphs;
  /// Owning robot of every global vertex.
  std::map<VertexId, int> owner;
  /// Vertices incident to a cut edge, with every (robot, local id) copy,
  /// owner included.
  std::map<VertexId, std::vector<std::pair<int, VertexId>>> separators;
  /// Robot refining each global edge (the owner of its `from` endpoint).
  std::vector<int> edge_owner;
  /// Global edge index of each subgraph edge, robot by robot.
  std::vector<std::vector<std::size_t>> local_edges;

  int size() const { return static_cast<int>(subgraphs.size()); }
  bool is_separator(VertexId v) const { return separators.contains(v); }
};

/// Multilevel k-way vertex partition: heavy-edge-matching coarsening, greedy
/// graph growing on the coarsest level, boundary refinement while
/// uncoarsening, then a repair pass that makes every block connected and
/// within max_block_size(). Returns the block index of every vertex in
/// vertex-id order. Throws DisconnectedInput.
std::vector<int> partition_vertices(const PoseGraph& g, int n, double balance_tol = 0.15);

/// Largest admissible block for |V| vertices split n ways.
std::size_t max_block_size(std::size_t num_vertices, int n, double balance_tol);

/// Builds subgraphs, separators and edge ownership from a block assignment
/// given in vertex-id order.
Partition build_partition(const PoseGraph& g, const std::vector<int>& blocks, int n);

Partition partition(const PoseGraph& g, int n, double balance_tol = 0.15);

/// Reassembles the global graph: owned vertices take their owner's estimate,
/// separators take the resolved pose, edges come back in global order with
/// the subgraphs' (possibly corrected) measurements. Throws
/// UnresolvedSeparator.
PoseGraph merge(const Partition& p, const std::map<VertexId, Pose2>& resolved);

/// Mean of each separator's copies (translation averaged, rotation by chordal
/// mean).
std::map<VertexId, Pose2> average_separators(const Partition& p);

nlohmann::json partition_manifest(const Partition& p);

}  // namespace mapgo
