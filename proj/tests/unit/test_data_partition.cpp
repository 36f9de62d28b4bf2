#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "mapgo/objective.hpp"
#include "mapgo/partition.hpp"
#include "mapgo/synthetic.hpp"
#include "../support/oracles.hpp"

using namespace mapgo;

namespace {

int count_origin(const PoseGraph& g, EdgeOrigin o) {
  return static_cast<int>(std::count_if(g.edges.begin(), g.edges.end(),
                                        [o](const EdgeMeasurement& e) { return e.origin == o; }));
}

// Recount oracle: block sizes from the owner map, connectivity of each block
// by flood fill over the global edges inside it.
void check_partition(const PoseGraph& g, const Partition& p, int n, double tol) {
  std::vector<std::size_t> sizes(n, 0);
  for (const auto& [id, r] : p.owner) ++sizes[r];
  CHECK(*std::max_element(sizes.begin(), sizes.end()) <= max_block_size(g.vertices.size(), n, tol));
  for (int r = 0; r < n; ++r) {
    std::set<VertexId> block;
    for (const auto& [id, o] : p.owner)
      if (o == r) block.insert(id);
    REQUIRE(!block.empty());
    std::set<VertexId> seen{*block.begin()};
    std::vector<VertexId> stack{*block.begin()};
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      for (const auto& e : g.edges) {
        VertexId u = -1;
        if (e.from == v) u = e.to;
        if (e.to == v) u = e.from;
        if (u >= 0 && block.contains(u) && seen.insert(u).second) stack.push_back(u);
      }
    }
    CHECK(seen.size() == block.size());
  }
  // every global edge exactly once, owned by its `from` owner
  std::vector<int> hits(g.edges.size(), 0);
  for (int r = 0; r < n; ++r)
    for (std::size_t k : p.local_edges[r]) {
      ++hits[k];
      CHECK(p.owner.at(g.edges[k].from) == r);
    }
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  // cut endpoints are separators, listed in both owners' subgraphs
  for (const auto& e : g.edges) {
    const int a = p.owner.at(e.from), b = p.owner.at(e.to);
    if (a == b) continue;
    for (VertexId v : {e.from, e.to}) {
      REQUIRE(p.is_separator(v));
      CHECK(p.subgraphs[a].vertices.contains(v));
      CHECK(p.subgraphs[b].vertices.contains(v));
    }
  }
  for (const auto& [v, copies] : p.separators) CHECK(copies.size() >= 2);
}

}  // namespace

TEST_CASE("generator counts and determinism") {
  GenSpec spec;
  spec.seed = 42;
  const PoseGraph g = generate(spec);
  CHECK(g.vertices.size() == 180);
  for (int r = 0; r < 3; ++r) {
    int odo = 0;
    for (const auto& e : g.edges)
      if (e.origin == EdgeOrigin::Odometry && g.vertices.at(e.from).robot == r) {
        ++odo;
        CHECK(g.vertices.at(e.to).robot == r);
        CHECK(g.vertices.at(e.to).timestep == g.vertices.at(e.from).timestep + 1);
      }
    CHECK(odo == 59);
  }
  CHECK(count_origin(g, EdgeOrigin::IntraLoop) > 0);
  CHECK(count_origin(g, EdgeOrigin::InterEstimate) + count_origin(g, EdgeOrigin::InterLoop) >= 2);
  CHECK(g.has_ground_truth());
  CHECK(is_connected(g));
  g.validate();

  const PoseGraph h = generate(spec);
  REQUIRE(h.edges.size() == g.edges.size());
  for (std::size_t k = 0; k < g.edges.size(); ++k) CHECK(h.edges[k].rel == g.edges[k].rel);
  for (const auto& [id, v] : g.vertices) CHECK(h.vertices.at(id).estimate == v.estimate);
}

TEST_CASE("generator limits") {
  GenSpec spec;
  spec.loop_ratio = 0.0;
  spec.seed = 1;
  CHECK(count_origin(generate(spec), EdgeOrigin::IntraLoop) == 0);

  spec.loop_ratio = 0.15;
  spec.profile = {0, 0, 0};
  auto g = generate(spec);
  for (const auto& [id, v] : g.vertices) CHECK((v.estimate.vector() - v.truth->vector()).norm() < 1e-9);
  for (auto& [id, v] : g.vertices) v.estimate = *v.truth;
  CHECK(objective_F(g) < 1e-20);
  CHECK(localization_error_L(g) < 1e-20);

  spec.poses_per_robot = 1;
  CHECK_THROWS_AS(generate(spec), InvalidSpec);
  spec.poses_per_robot = 10;
  spec.loop_ratio = 1.5;
  CHECK_THROWS_AS(generate(spec), InvalidSpec);
}

TEST_CASE("outlier injection") {
  GenSpec spec;
  spec.seed = 9;
  const PoseGraph g = generate(spec);
  const auto none = inject_outliers(g, 0.0, 1);
  CHECK(none.corrupted.empty());
  for (std::size_t k = 0; k < g.edges.size(); ++k) CHECK(none.graph.edges[k].rel == g.edges[k].rel);

  std::size_t eligible = 0;
  for (const auto& e : g.edges) eligible += is_loop_or_inter(e.origin);
  int increased = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto out = inject_outliers(g, 0.10, s);
    CHECK(out.corrupted.size() == static_cast<std::size_t>(std::llround(0.10 * eligible)));
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      const bool hit = std::binary_search(out.corrupted.begin(), out.corrupted.end(), k);
      if (!hit) CHECK(out.graph.edges[k].rel == g.edges[k].rel);
      if (hit) CHECK(is_loop_or_inter(g.edges[k].origin));
    }
    auto before = g, after = out.graph;
    for (auto* x : {&before, &after})
      for (auto& [id, v] : x->vertices) v.estimate = *v.truth;
    increased += objective_F(after) > objective_F(before);
  }
  CHECK(increased == 20);

  PoseGraph chain;
  chain.vertices[0] = Vertex{};
  chain.vertices[1] = Vertex{0, 1, Pose2(), std::nullopt};
  chain.edges.push_back(make_edge(0, 1, Pose2(1, 0, 0), Information(), EdgeOrigin::Odometry));
  CHECK_THROWS_AS(inject_outliers(chain, 0.5, 0), NoEligibleEdges);
}

TEST_CASE("partition n = 1 and merge round trip") {
  GenSpec spec;
  spec.n_robots = 2;
  spec.poses_per_robot = 20;
  spec.seed = 3;
  const PoseGraph g = generate(spec);
  const Partition p = partition(g, 1);
  CHECK(p.size() == 1);
  CHECK(p.separators.empty());
  CHECK(p.subgraphs[0].vertices.size() == g.vertices.size());
  CHECK(p.subgraphs[0].edges.size() == g.edges.size());
  const PoseGraph m = merge(p, {});
  CHECK(objective_F(m) == objective_F(g));
  CHECK(m.edges.size() == g.edges.size());
}

TEST_CASE("two-robot chain with one inter-robot edge") {
  PoseGraph g;
  for (int i = 0; i < 6; ++i) g.vertices[i] = Vertex{i / 3, i % 3, Pose2(i, 0, 0), std::nullopt};
  for (int i : {0, 1, 3, 4}) g.edges.push_back(make_edge(i, i + 1, Pose2(1, 0, 0), Information(), EdgeOrigin::Odometry));
  g.edges.push_back(make_edge(2, 3, Pose2(1, 0, 0), Information(), EdgeOrigin::InterLoop));
  const Partition p = partition(g, 2, 0.0);
  CHECK(p.separators.size() == 2);
  CHECK(p.is_separator(2));
  CHECK(p.is_separator(3));
  check_partition(g, p, 2, 0.0);
  const PoseGraph m = merge(p, average_separators(p));
  CHECK(m.vertices.size() == 6);
  CHECK(m.edges.size() == 5);
  CHECK(m.estimate(2) == g.estimate(2));
  CHECK_THROWS_AS(merge(p, {}), UnresolvedSeparator);
}

TEST_CASE("partition balance, connectivity and ownership") {
  GenSpec spec;
  spec.n_robots = 4;
  spec.poses_per_robot = 25;
  for (std::uint64_t s = 0; s < 10; ++s) {
    spec.seed = s;
    const PoseGraph g = generate(spec);
    REQUIRE(g.vertices.size() == 100);
    const Partition p = partition(g, 4, 0.2);
    std::vector<int> sizes(4, 0);
    for (const auto& [id, r] : p.owner) ++sizes[r];
    CHECK(*std::max_element(sizes.begin(), sizes.end()) <= 30);
    check_partition(g, p, 4, 0.2);
    for (int n : {2, 7}) check_partition(g, partition(g, n), n, 0.15);
  }
}

TEST_CASE("merge objective equals blockwise sum") {
  std::mt19937_64 rng(31);
  GenSpec spec;
  spec.n_robots = 3;
  spec.poses_per_robot = 30;
  spec.seed = 77;
  const PoseGraph g = generate(spec);
  Partition p = partition(g, 3);
  // perturb local copies so duplicates disagree
  for (auto& sub : p.subgraphs)
    for (auto& [id, v] : sub.vertices) v.estimate = compose(v.estimate, oracle::random_pose(rng, 0.1));
  const auto resolved = average_separators(p);
  const PoseGraph m = merge(p, resolved);
  CHECK(m.vertices.size() == g.vertices.size());
  CHECK(m.edges.size() == g.edges.size());
  // blockwise oracle: each edge evaluated at owner/resolved estimates
  auto pose_of = [&](VertexId v) {
    if (resolved.contains(v)) return resolved.at(v);
    return p.subgraphs[p.owner.at(v)].vertices.at(v).estimate;
  };
  double f = 0.0;
  for (int r = 0; r < p.size(); ++r)
    for (const auto& e : p.subgraphs[r].edges) {
      const auto res = oracle::residual(e, pose_of(e.from), pose_of(e.to));
      f += res.squaredNorm();
    }
  CHECK(objective_F(m) == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("partition errors") {
  PoseGraph g;
  g.vertices[0] = Vertex{};
  g.vertices[1] = Vertex{};
  CHECK_THROWS_AS(partition(g, 2), DisconnectedInput);
  CHECK_THROWS_AS(partition(g, 0), InvalidSpec);
}

TEST_CASE("partition manifest") {
  GenSpec spec;
  spec.poses_per_robot = 15;
  const PoseGraph g = generate(spec);
  const auto j = partition_manifest(partition(g, 3));
  CHECK(j["robots"] == 3);
  std::size_t total = 0;
  for (const auto& b : j["blocks"]) total += b["vertices"].size();
  CHECK(total == g.vertices.size());
}
