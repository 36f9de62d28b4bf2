#include "mapgo/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "mapgo/errors.hpp"
#include "mapgo/objective.hpp"

namespace mapgo {

std::string variant_name(Variant v) { return v == Variant::V1 ? "V1" : "V2"; }

Variant parse_variant(const std::string& s) {
  if (s == "V1" || s == "v1") return Variant::V1;
  if (s == "V2" || s == "v2") return Variant::V2;
  throw InvalidSpec("unknown variant '" + s + "'");
}

std::vector<std::size_t> gate_prune(const Partition& p, std::vector<Actor>& actors, double threshold) {
  if (static_cast<int>(actors.size()) != p.size()) throw InvalidSpec("one actor per robot required");
  std::vector<std::size_t> out;
  for (int r = 0; r < p.size(); ++r) {
    const PoseGraph& sub = p.subgraphs[r];
    if (sub.edges.empty()) continue;
    const std::vector<double> z = actors[r].encoder().gate_values(graph_tensors(sub));
    const PruneResult pr = prune(sub, z, threshold);
    for (std::size_t k : pr.removed) out.push_back(p.local_edges[r][k]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SolveReport solve(const PoseGraph& g, std::vector<Actor>& actors, const SolveConfig& cfg, Variant variant,
                  nn::Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  SolveReport rep;
  rep.variant = variant;
  rep.f_initial = objective_F(g, cfg.weights);

  MarlEnv env(cfg.env);
  env.reset(g);
  if (cfg.prune) rep.pruned = gate_prune(env.partition(), actors, cfg.gate_threshold);
  const RolloutResult roll = rollout(env, actors, cfg.mode, rng);
  rep.steps = roll.steps;
  for (double r : roll.returns) rep.episode_return += r;

  Partition corrected = env.partition();
  if (!rep.pruned.empty()) {
    for (int r = 0; r < corrected.size(); ++r) {
      auto& sub = corrected.subgraphs[r];
      std::vector<EdgeMeasurement> kept;
      std::vector<std::size_t> kept_ids;
      for (std::size_t k = 0; k < sub.edges.size(); ++k)
        if (!std::binary_search(rep.pruned.begin(), rep.pruned.end(), corrected.local_edges[r][k])) {
          kept.push_back(sub.edges[k]);
          kept_ids.push_back(corrected.local_edges[r][k]);
        }
      sub.edges = std::move(kept);
      corrected.local_edges[r] = std::move(kept_ids);
    }
  }
  AdmmConfig admm = cfg.admm;
  admm.weights = cfg.weights;
  const AdmmResult consensus = admm_consensus(corrected, admm);
  rep.admm_iterations = consensus.iterations;
  rep.admm_converged = consensus.converged;

  // Estimates only: every vertex takes its owner's pose, separators the
  // resolved one.
  rep.result = g;
  for (auto& [id, v] : rep.result.vertices) {
    const auto it = consensus.resolved.find(id);
    v.estimate = it != consensus.resolved.end() ? it->second
                                                 : consensus.partition.subgraphs.at(consensus.partition.owner.at(id)).estimate(id);
  }
  rep.f_v1 = rep.f_final = objective_F(rep.result, cfg.weights);

  if (variant == Variant::V2) {
    LMResult lm = lm_refine(rep.result, cfg.weights, cfg.refine);
    rep.lm_accepted = lm.accepted_steps;
    rep.result = std::move(lm.graph);
    rep.f_final = objective_F(rep.result, cfg.weights);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace mapgo
