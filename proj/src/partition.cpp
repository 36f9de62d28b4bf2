#include "mapgo/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>

namespace mapgo {

namespace {

// Undirected weighted graph on dense indices; parallel edges merged.
struct WGraph {
  std::vector<int> vweight;
  std::vector<std::vector<std::pair<int, int>>> adj;  // (neighbor, edge weight)

  int size() const { return static_cast<int>(vweight.size()); }
};

WGraph from_pose_graph(const PoseGraph& g, const std::map<VertexId, int>& index) {
  const int n = static_cast<int>(index.size());
  std::vector<std::map<int, int>> acc(n);
  for (const auto& e : g.edges) {
    const int a = index.at(e.from), b = index.at(e.to);
    if (a == b) continue;
    ++acc[a][b];
    ++acc[b][a];
  }
  WGraph w;
  w.vweight.assign(n, 1);
  w.adj.resize(n);
  for (int v = 0; v < n; ++v)
    for (auto [u, c] : acc[v]) w.adj[v].emplace_back(u, c);
  return w;
}

// Heavy-edge matching; returns the coarse graph and the fine->coarse map.
std::pair<WGraph, std::vector<int>> coarsen(const WGraph& g, int max_vweight) {
  const int n = g.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Low-degree vertices first so chain ends get matched.
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return g.adj[a].size() < g.adj[b].size(); });
  std::vector<int> match(n, -1);
  for (int v : order) {
    if (match[v] != -1) continue;
    int best = -1, best_w = 0;
    for (auto [u, w] : g.adj[v]) {
      if (match[u] != -1 || u == v) continue;
      if (g.vweight[v] + g.vweight[u] > max_vweight) continue;
      if (w > best_w || (w == best_w && best != -1 && g.vweight[u] < g.vweight[best])) {
        best = u;
        best_w = w;
      }
    }
    match[v] = best == -1 ? v : best;
    if (best != -1) match[best] = v;
  }
  std::vector<int> cmap(n, -1);
  int nc = 0;
  for (int v = 0; v < n; ++v) {
    if (cmap[v] != -1) continue;
    cmap[v] = nc;
    cmap[match[v]] = nc;
    ++nc;
  }
  WGraph c;
  c.vweight.assign(nc, 0);
  c.adj.resize(nc);
  std::vector<std::map<int, int>> acc(nc);
  for (int v = 0; v < n; ++v) {
    c.vweight[cmap[v]] += g.vweight[v];
    for (auto [u, w] : g.adj[v])
      if (cmap[u] != cmap[v]) acc[cmap[v]][cmap[u]] += w;
  }
  for (int v = 0; v < nc; ++v)
    for (auto [u, w] : acc[v]) c.adj[v].emplace_back(u, w);
  return {c, cmap};
}

// Greedy graph growing: each block absorbs the frontier vertex most strongly
// connected to it until it reaches the target weight; the last block takes
// the remainder.
std::vector<int> grow_initial(const WGraph& g, int k, int seed_offset) {
  const int n = g.size();
  const int total = std::accumulate(g.vweight.begin(), g.vweight.end(), 0);
  std::vector<int> part(n, -1);
  int assigned_weight = 0;
  for (int b = 0; b < k - 1; ++b) {
    const double target = static_cast<double>(total - assigned_weight) / (k - b);
    int weight = 0;
    std::vector<int> conn(n, 0);
    auto absorb = [&](int v) {
      part[v] = b;
      weight += g.vweight[v];
      for (auto [u, w] : g.adj[v])
        if (part[u] == -1) conn[u] += w;
    };
    while (weight < target) {
      int best = -1;
      for (int v = 0; v < n; ++v)
        if (part[v] == -1 && conn[v] > 0 && (best == -1 || conn[v] > conn[best])) best = v;
      if (best == -1) {
        // Seed (or re-seed) at the first unassigned vertex from the offset on.
        for (int i = 0; i < n; ++i)
          if (const int v = (seed_offset + i) % n; part[v] == -1) {
            best = v;
            break;
          }
      }
      if (best == -1) break;
      // Leave at least one vertex for every remaining block.
      int remaining = 0;
      for (int v = 0; v < n; ++v) remaining += part[v] == -1;
      if (remaining <= k - 1 - b) break;
      if (weight > 0 && weight + g.vweight[best] > target + 0.5 * g.vweight[best]) break;
      absorb(best);
    }
    assigned_weight += weight;
  }
  for (int v = 0; v < n; ++v)
    if (part[v] == -1) part[v] = k - 1;
  return part;
}

std::vector<int> block_weights(const WGraph& g, const std::vector<int>& part, int k) {
  std::vector<int> w(k, 0);
  for (int v = 0; v < g.size(); ++v) w[part[v]] += g.vweight[v];
  return w;
}

// Greedy boundary refinement: positive-gain moves (and zero-gain moves that
// improve balance) that respect the block cap and never empty a block.
void refine(const WGraph& g, std::vector<int>& part, int k, int cap) {
  auto weight = block_weights(g, part, k);
  std::vector<int> conn(k);
  for (int pass = 0; pass < 10; ++pass) {
    bool moved = false;
    for (int v = 0; v < g.size(); ++v) {
      const int own = part[v];
      std::fill(conn.begin(), conn.end(), 0);
      bool boundary = false;
      for (auto [u, w] : g.adj[v]) {
        conn[part[u]] += w;
        boundary = boundary || part[u] != own;
      }
      if (!boundary || weight[own] - g.vweight[v] < 1) continue;
      int best = -1, best_gain = 0;
      for (int b = 0; b < k; ++b) {
        if (b == own || conn[b] == 0 || weight[b] + g.vweight[v] > cap) continue;
        const int gain = conn[b] - conn[own];
        if (best == -1 || gain > best_gain || (gain == best_gain && weight[b] < weight[best])) {
          best = b;
          best_gain = gain;
        }
      }
      if (best == -1) continue;
      const bool overweight = weight[own] > cap;
      const bool evens_out = best_gain == 0 && weight[own] > weight[best] + g.vweight[v];
      if (!(best_gain > 0 || evens_out || overweight)) continue;
      weight[own] -= g.vweight[v];
      weight[best] += g.vweight[v];
      part[v] = best;
      moved = true;
    }
    if (!moved) break;
  }
}

// Connected components of block b restricted to its own vertices.
std::vector<std::vector<int>> block_components(const WGraph& g, const std::vector<int>& part, int b) {
  std::vector<std::vector<int>> comps;
  std::vector<char> seen(g.size(), 0);
  for (int s = 0; s < g.size(); ++s) {
    if (part[s] != b || seen[s]) continue;
    comps.emplace_back();
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      comps.back().push_back(v);
      for (auto [u, w] : g.adj[v])
        if (part[u] == b && !seen[u]) {
          seen[u] = 1;
          q.push(u);
        }
    }
  }
  return comps;
}

void repair_connectivity(const WGraph& g, std::vector<int>& part, int k) {
  for (bool changed = true; changed;) {
    changed = false;
    for (int b = 0; b < k; ++b) {
      auto comps = block_components(g, part, b);
      if (comps.size() <= 1) continue;
      auto largest = std::max_element(comps.begin(), comps.end(),
                                      [](const auto& x, const auto& y) { return x.size() < y.size(); });
      for (auto it = comps.begin(); it != comps.end(); ++it) {
        if (it == largest) continue;
        std::vector<int> cut(k, 0);
        for (int v : *it)
          for (auto [u, w] : g.adj[v])
            if (part[u] != b) cut[part[u]] += w;
        const int target = static_cast<int>(std::max_element(cut.begin(), cut.end()) - cut.begin());
        if (cut[target] == 0) continue;
        for (int v : *it) part[v] = target;
        changed = true;
      }
      if (changed) break;
    }
  }
}

// Vertices of block b whose removal keeps the rest of the block connected
// (non-articulation points of the induced subgraph).
std::vector<char> removable(const WGraph& g, const std::vector<int>& part, int b) {
  const int n = g.size();
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<char> cut(n, 0), out(n, 0);
  int timer = 0;
  // Iterative Tarjan: frames of (vertex, parent, next adjacency index).
  struct Frame {
    int v, parent;
    std::size_t next;
    int children;
  };
  for (int s = 0; s < n; ++s) {
    if (part[s] != b || disc[s] != -1) continue;
    std::vector<Frame> stack{{s, -1, 0, 0}};
    disc[s] = low[s] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < g.adj[f.v].size()) {
        const int u = g.adj[f.v][f.next++].first;
        if (part[u] != b || u == f.parent) continue;
        if (disc[u] == -1) {
          disc[u] = low[u] = timer++;
          ++f.children;
          stack.push_back({u, f.v, 0, 0});
        } else {
          low[f.v] = std::min(low[f.v], disc[u]);
        }
        continue;
      }
      const Frame done = f;
      stack.pop_back();
      if (stack.empty()) {
        cut[done.v] = done.children > 1;
      } else {
        Frame& par = stack.back();
        low[par.v] = std::min(low[par.v], low[done.v]);
        if (par.parent != -1 && low[done.v] >= disc[par.v]) cut[par.v] = 1;
      }
    }
  }
  for (int v = 0; v < n; ++v) out[v] = part[v] == b && !cut[v];
  return out;
}

// Best vertex of block `from` to hand over to block `to`: adjacent to `to`,
// removable from `from`, maximizing the cut gain. -1 if none.
int transfer_candidate(const WGraph& g, const std::vector<int>& part, int from, int to,
                       const std::vector<char>& movable) {
  int best = -1, best_gain = 0;
  for (int v = 0; v < g.size(); ++v) {
    if (part[v] != from || !movable[v]) continue;
    int to_w = 0, own_w = 0;
    for (auto [u, w] : g.adj[v]) {
      if (part[u] == to) to_w += w;
      if (part[u] == from) own_w += w;
    }
    if (to_w == 0) continue;
    if (best == -1 || to_w - own_w > best_gain) {
      best = v;
      best_gain = to_w - own_w;
    }
  }
  return best;
}

// Vertex v of block `from` plus every piece of the block that only hangs on
// v, i.e. all components of (block - v) except the heaviest.
std::vector<int> detach_set(const WGraph& g, const std::vector<int>& part, int from, int v) {
  std::vector<int> comp(g.size(), -1);
  std::vector<std::vector<int>> comps;
  std::vector<int> cw;
  for (int s = 0; s < g.size(); ++s) {
    if (part[s] != from || s == v || comp[s] != -1) continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    cw.push_back(0);
    std::queue<int> q;
    q.push(s);
    comp[s] = id;
    while (!q.empty()) {
      const int x = q.front();
      q.pop();
      comps[id].push_back(x);
      cw[id] += g.vweight[x];
      for (auto [u, w] : g.adj[x])
        if (u != v && part[u] == from && comp[u] == -1) {
          comp[u] = id;
          q.push(u);
        }
    }
  }
  std::vector<int> out{v};
  if (comps.empty()) return out;
  const auto keep = std::max_element(cw.begin(), cw.end()) - cw.begin();
  for (std::size_t c = 0; c < comps.size(); ++c)
    if (static_cast<std::ptrdiff_t>(c) != keep) out.insert(out.end(), comps[c].begin(), comps[c].end());
  return out;
}

// Direct relief of block `heavy`: the lightest detachable set adjacent to a
// block that can absorb it. Returns (set, target block); empty set if none.
std::pair<std::vector<int>, int> direct_transfer(const WGraph& g, const std::vector<int>& part,
                                                 const std::vector<int>& weight, int heavy, int k,
                                                 int cap) {
  std::vector<int> best;
  int best_w = 0, best_to = -1;
  std::vector<int> conn(k);
  for (int v = 0; v < g.size(); ++v) {
    if (part[v] != heavy) continue;
    std::fill(conn.begin(), conn.end(), 0);
    for (auto [u, w] : g.adj[v]) conn[part[u]] += w;
    bool any = false;
    for (int c = 0; c < k; ++c) any = any || (c != heavy && conn[c] > 0 && weight[c] < cap);
    if (!any) continue;
    auto set = detach_set(g, part, heavy, v);
    int sw = 0;
    for (int x : set) sw += g.vweight[x];
    if (sw >= weight[heavy]) continue;
    for (int c = 0; c < k; ++c) {
      if (c == heavy || conn[c] == 0 || weight[c] + sw > cap) continue;
      if (best_to == -1 || sw < best_w) {
        best = set;
        best_w = sw;
        best_to = c;
      }
    }
  }
  return {best, best_to};
}

// Drains overweight blocks. Weight travels along a shortest chain of
// adjacent blocks to one with spare room, one vertex per hop, so every
// intermediate block keeps its weight and every block stays connected.
void repair_balance(const WGraph& g, std::vector<int>& part, int k, int cap) {
  auto weight = block_weights(g, part, k);
  for (int guard = 0; guard < 4 * g.size(); ++guard) {
    int heavy = -1;
    for (int b = 0; b < k; ++b)
      if (weight[b] > cap && (heavy == -1 || weight[b] > weight[heavy])) heavy = b;
    if (heavy == -1) return;

    if (auto [set, to] = direct_transfer(g, part, weight, heavy, k, cap); to != -1) {
      for (int v : set) {
        part[v] = to;
        weight[heavy] -= g.vweight[v];
        weight[to] += g.vweight[v];
      }
      continue;
    }

    // BFS over blocks; an arc b -> c exists when b can hand a vertex to c.
    std::vector<int> prev(k, -2);
    prev[heavy] = -1;
    std::queue<int> q;
    q.push(heavy);
    int target = -1;
    while (!q.empty() && target == -1) {
      const int b = q.front();
      q.pop();
      for (int c = 0; c < k && target == -1; ++c) {
        if (prev[c] != -2) continue;
        bool adjacent = false;
        for (int v = 0; v < g.size() && !adjacent; ++v)
          if (part[v] == b)
            for (auto [u, w] : g.adj[v]) adjacent = adjacent || part[u] == c;
        if (!adjacent) continue;
        prev[c] = b;
        if (weight[c] + 1 <= cap) target = c;
        else q.push(c);
      }
    }
    if (target == -1) return;
    std::vector<int> path{target};
    while (prev[path.back()] != -1) path.push_back(prev[path.back()]);
    std::reverse(path.begin(), path.end());
    // Hand over from the far end first so each source still has its vertex.
    for (std::size_t h = path.size() - 1; h-- > 0;) {
      const int from = path[h], to = path[h + 1];
      const auto mv = removable(g, part, from);
      if (const int v = transfer_candidate(g, part, from, to, mv); v != -1) {
        part[v] = to;
        weight[from] -= g.vweight[v];
        weight[to] += g.vweight[v];
        continue;
      }
      // No single vertex can leave; hand over the smallest detachable set and
      // let later rounds settle the overshoot.
      std::vector<int> smallest;
      for (int v = 0; v < g.size(); ++v) {
        if (part[v] != from) continue;
        if (std::none_of(g.adj[v].begin(), g.adj[v].end(), [&](auto uw) { return part[uw.first] == to; }))
          continue;
        auto set = detach_set(g, part, from, v);
        if (static_cast<int>(set.size()) < weight[from] && (smallest.empty() || set.size() < smallest.size()))
          smallest = std::move(set);
      }
      if (smallest.empty()) return;
      for (int v : smallest) {
        part[v] = to;
        weight[from] -= g.vweight[v];
        weight[to] += g.vweight[v];
      }
    }
  }
}

}  // namespace

std::size_t max_block_size(std::size_t num_vertices, int n, double balance_tol) {
  const double ideal = static_cast<double>(num_vertices) / n;
  const auto relaxed = static_cast<std::size_t>(std::floor((1.0 + balance_tol) * ideal + 1e-9));
  return std::max(relaxed, static_cast<std::size_t>(std::ceil(ideal)));
}

std::vector<int> partition_vertices(const PoseGraph& g, int n, double balance_tol) {
  if (n < 1) throw InvalidSpec("number of blocks must be >= 1");
  if (balance_tol < 0.0) throw InvalidSpec("balance tolerance must be >= 0");
  if (static_cast<std::size_t>(n) > g.vertices.size())
    throw InvalidSpec("more blocks than vertices");
  if (!is_connected(g)) throw DisconnectedInput("pose graph is not connected");
  if (n == 1) return std::vector<int>(g.vertices.size(), 0);

  std::map<VertexId, int> index;
  for (const auto& [id, v] : g.vertices) index.emplace(id, static_cast<int>(index.size()));
  const int cap = static_cast<int>(max_block_size(g.vertices.size(), n, balance_tol));

  std::vector<WGraph> levels{from_pose_graph(g, index)};
  std::vector<std::vector<int>> maps;
  const int max_vweight = std::max(1, cap / 3);
  while (levels.back().size() > 8 * n) {
    auto [coarse, cmap] = coarsen(levels.back(), max_vweight);
    if (coarse.size() > 0.9 * levels.back().size()) break;
    levels.push_back(std::move(coarse));
    maps.push_back(std::move(cmap));
  }

  // Multi-start over the growing seed; keep the best by (balanced and
  // connected, overweight, cut).
  std::vector<int> best;
  std::tuple<bool, int, int> best_score{true, 0, 0};
  const int coarse_n = levels.back().size();
  const int starts = std::min(coarse_n, 16);
  for (int a = 0; a < starts; ++a) {
    std::vector<int> part = grow_initial(levels.back(), n, a * coarse_n / starts);
    refine(levels.back(), part, n, cap);
    for (int lvl = static_cast<int>(maps.size()) - 1; lvl >= 0; --lvl) {
      const auto& cmap = maps[lvl];
      std::vector<int> fine(cmap.size());
      for (std::size_t v = 0; v < cmap.size(); ++v) fine[v] = part[cmap[v]];
      part = std::move(fine);
      refine(levels[lvl], part, n, cap);
    }
    repair_connectivity(levels.front(), part, n);
    repair_balance(levels.front(), part, n, cap);

    const auto& fine = levels.front();
    const auto w = block_weights(fine, part, n);
    const int over = std::max(0, *std::max_element(w.begin(), w.end()) - cap);
    bool split = false;
    for (int b = 0; b < n; ++b) split = split || block_components(fine, part, b).size() != 1;
    int cut = 0;
    for (int v = 0; v < fine.size(); ++v)
      for (auto [u, ew] : fine.adj[v])
        if (part[u] != part[v]) cut += ew;
    const std::tuple<bool, int, int> score{split || over > 0, over, cut};
    if (best.empty() || score < best_score) {
      best = std::move(part);
      best_score = score;
    }
  }
  return best;
}

Partition build_partition(const PoseGraph& g, const std::vector<int>& blocks, int n) {
  if (blocks.size() != g.vertices.size()) throw InvalidSpec("block assignment size mismatch");
  Partition p;
  p.subgraphs.resize(n);
  p.local_edges.resize(n);
  std::vector<std::set<VertexId>> members(n);
  std::size_t i = 0;
  for (const auto& [id, v] : g.vertices) {
    const int b = blocks[i++];
    if (b < 0 || b >= n) throw InvalidSpec("block index out of range");
    p.owner[id] = b;
    members[b].insert(id);
  }
  std::set<VertexId> cut_vertices;
  p.edge_owner.resize(g.edges.size());
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto& e = g.edges[k];
    const int a = p.owner.at(e.from), b = p.owner.at(e.to);
    p.edge_owner[k] = a;
    p.local_edges[a].push_back(k);
    if (a != b) {
      for (VertexId v : {e.from, e.to}) {
        members[a].insert(v);
        members[b].insert(v);
        cut_vertices.insert(v);
      }
    }
  }
  for (int r = 0; r < n; ++r) {
    for (VertexId id : members[r]) p.subgraphs[r].vertices.emplace(id, g.vertices.at(id));
    for (std::size_t k : p.local_edges[r]) p.subgraphs[r].edges.push_back(g.edges[k]);
  }
  for (VertexId v : cut_vertices)
    for (int r = 0; r < n; ++r)
      if (members[r].contains(v)) p.separators[v].emplace_back(r, v);
  return p;
}

Partition partition(const PoseGraph& g, int n, double balance_tol) {
  return build_partition(g, partition_vertices(g, n, balance_tol), n);
}

PoseGraph merge(const Partition& p, const std::map<VertexId, Pose2>& resolved) {
  PoseGraph out;
  for (const auto& [id, robot] : p.owner) {
    Vertex v = p.subgraphs[robot].vertices.at(id);
    if (p.is_separator(id)) {
      auto it = resolved.find(id);
      if (it == resolved.end())
        throw UnresolvedSeparator("separator " + std::to_string(id) + " has no resolved pose");
      v.estimate = it->second;
    }
    out.vertices.emplace(id, v);
  }
  std::size_t num_edges = 0;
  for (const auto& le : p.local_edges) num_edges += le.size();
  out.edges.resize(num_edges);
  for (int r = 0; r < p.size(); ++r)
    for (std::size_t k = 0; k < p.local_edges[r].size(); ++k)
      out.edges[p.local_edges[r][k]] = p.subgraphs[r].edges[k];
  return out;
}

std::map<VertexId, Pose2> average_separators(const Partition& p) {
  std::map<VertexId, Pose2> out;
  for (const auto& [id, copies] : p.separators) {
    double x = 0, y = 0, c = 0, s = 0;
    for (auto [robot, local] : copies) {
      const Pose2& e = p.subgraphs[robot].vertices.at(local).estimate;
      x += e.x;
      y += e.y;
      c += std::cos(e.theta);
      s += std::sin(e.theta);
    }
    const double m = static_cast<double>(copies.size());
    out[id] = Pose2(x / m, y / m, std::atan2(s, c));
  }
  return out;
}

nlohmann::json partition_manifest(const Partition& p) {
  nlohmann::json j;
  j["robots"] = p.size();
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (int r = 0; r < p.size(); ++r) {
    std::vector<VertexId> owned;
    for (const auto& [id, o] : p.owner)
      if (o == r) owned.push_back(id);
    blocks.push_back({{"robot", r}, {"vertices", owned}, {"edges", p.local_edges[r]}});
  }
  auto& seps = j["separators"] = nlohmann::json::array();
  for (const auto& [id, copies] : p.separators) {
    std::vector<int> robots;
    for (auto [r, local] : copies) robots.push_back(r);
    seps.push_back({{"vertex", id}, {"robots", robots}});
  }
  return j;
}

}  // namespace mapgo
