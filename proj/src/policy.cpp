#include "mapgo/policy.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mapgo/objective.hpp"

namespace mapgo {

using ad::Mat;
using ad::Tape;
using ad::Var;

SubgraphSnapshot SubgraphSnapshot::capture(const PoseGraph& g) {
  SubgraphSnapshot s;
  s.graph = std::make_shared<const PoseGraph>(g);
  s.base = std::make_shared<const GraphTensors>(graph_tensors(g));
  std::vector<Pose2> rel;
  for (const auto& e : g.edges) rel.push_back(e.rel);
  s.rel = std::make_shared<const std::vector<Pose2>>(std::move(rel));
  return s;
}

SubgraphSnapshot SubgraphSnapshot::with_measurements(const PoseGraph& g) const {
  SubgraphSnapshot s = *this;
  std::vector<Pose2> rel;
  for (const auto& e : g.edges) rel.push_back(e.rel);
  s.rel = std::make_shared<const std::vector<Pose2>>(std::move(rel));
  return s;
}

GraphTensors SubgraphSnapshot::tensors() const {
  GraphTensors t = *base;
  for (std::size_t k = 0; k < graph->edges.size(); ++k) {
    const Pose2& r = (*rel)[k];
    if (r == graph->edges[k].rel) continue;
    EdgeMeasurement e = graph->edges[k];
    e.rel = r;
    t.edge_attrs.row(k) = edge_attributes(*graph, e).transpose();
    t.residuals.row(k) = edge_residual(e, graph->estimate(e.from), graph->estimate(e.to)).transpose();
  }
  return t;
}

void ActorConfig::validate() const {
  if (slots < 1 || memory_layers < 1 || memory_hidden < 1) throw InvalidSpec("actor sizes must be positive");
  if (!(log_std_min < log_std_max)) throw InvalidSpec("log-std bounds out of order");
  if (!(initial_log_std >= log_std_min && initial_log_std <= log_std_max))
    throw InvalidSpec("initial log-std outside its bounds");
  if (!(gumbel_temperature > 0.0)) throw InvalidSpec("Gumbel temperature must be > 0");
}

Var squashed_gaussian_log_prob(Var u, Var mean, Var log_std) {
  // log N(u; mean, std) - log(1 - tanh(u)^2), with
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
  Var z = ad::mul(ad::sub(u, mean), ad::exp(ad::scale(log_std, -1.0)));
  Var normal = ad::add_scalar(ad::add(ad::scale(ad::square(z), -0.5), ad::scale(log_std, -1.0)),
                              -0.5 * std::log(2.0 * std::numbers::pi));
  Var jac = ad::scale(ad::add_scalar(ad::add(u, ad::softplus(ad::scale(u, -2.0))), -std::log(2.0)), 2.0);
  return ad::row_sum(ad::add(normal, jac));
}

double squashed_gaussian_log_prob(double a, double mean, double log_std) {
  const double u = std::atanh(a);
  const double sd = std::exp(log_std);
  const double z = (u - mean) / sd;
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(1.0 - a * a);
}

Actor::Actor(const std::string& name, const ActorConfig& cfg, nn::Rng& rng) : name_(name), cfg_(cfg) {
  cfg.validate();
  encoder_ = EccEncoder(name + ".encoder", cfg.encoder, rng);
  const int d = cfg.encoder.hidden;
  edge_embed_ = ad::Parameter(name + ".edge_embed", nn::xavier(rng, cfg.slots + 1, cfg.edge_embedding));
  memory_ = nn::GruStack(name + ".memory", d + cfg.edge_embedding + 3, cfg.memory_hidden, cfg.memory_layers, rng);
  selector_ = nn::Linear(name + ".selector", cfg.memory_hidden, cfg.slots, rng, 0.1);
  edge_score_ = nn::Mlp(name + ".edge_score", {2 * d + 6 + cfg.memory_hidden, cfg.score_hidden, 1}, rng, 0.1);
  corrector_ = nn::Mlp(name + ".corrector", {cfg.memory_hidden + 2 * d + 6, cfg.corrector_hidden, 6}, rng, 0.1);
  corrector_.layers.back().bias.value.rightCols(3).setConstant(cfg.initial_log_std);
}

Mat Actor::initial_memory() const { return Mat::Zero(cfg_.memory_layers, cfg_.memory_hidden); }

ActorPass Actor::run(Tape& t, const std::vector<const RobotObservation*>& obs, ActMode mode, nn::Rng& rng) {
  const int b_n = static_cast<int>(obs.size());
  if (b_n == 0) throw EmptyActionSet("no observations");
  const int slots = cfg_.slots;
  std::vector<GraphTensors> parts;
  parts.reserve(b_n);
  for (const auto* o : obs) {
    if (!o->active()) throw EmptyActionSet("robot has no open edges");
    parts.push_back(o->graph.tensors());
    if (parts.back().num_edges > slots) throw InvalidSpec("more local edges than selector slots");
  }
  std::vector<const GraphTensors*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  const GraphTensors g = batch_graphs(ptrs);
  const int e_n = g.num_edges;

  ActorPass out;
  const auto enc = encoder_.forward(t, g, mode == ActMode::Sample ? GateMode::Sample : GateMode::Deterministic, &rng);
  out.gates = enc.gates;

  // Memory update from [latent || previous edge embedding || previous action].
  auto prev_idx = std::make_shared<ad::Index>(b_n);
  Mat prev_action(b_n, 3);
  std::vector<Mat> state(cfg_.memory_layers, Mat(b_n, cfg_.memory_hidden));
  for (int b = 0; b < b_n; ++b) {
    (*prev_idx)[b] = obs[b]->prev_edge + 1;
    prev_action.row(b) = obs[b]->prev_action.transpose();
    for (int k = 0; k < cfg_.memory_layers; ++k) state[k].row(b) = obs[b]->memory.row(k);
  }
  std::vector<Var> state_vars;
  for (auto& s : state) state_vars.push_back(t.constant(std::move(s)));
  Var mem_in = ad::concat_cols({enc.latent, ad::gather_rows(t.param(edge_embed_), prev_idx), t.constant(prev_action)});
  out.memory = memory_(t, mem_in, state_vars);
  Var o = out.memory.back();

  // Per-edge features [h_from || h_to || residual || log info].
  auto from_idx = std::make_shared<const ad::Index>(g.arc_dst->begin(), g.arc_dst->begin() + e_n);
  auto to_idx = std::make_shared<const ad::Index>(g.arc_src->begin(), g.arc_src->begin() + e_n);
  Mat cues(e_n, 6);
  cues << g.residuals, g.log_info;
  Var feats = ad::concat_cols({ad::gather_rows(enc.nodes, from_idx), ad::gather_rows(enc.nodes, to_idx), t.constant(cues)});
  const int f_dim = static_cast<int>(feats.cols());
  Var scores = edge_score_(t, ad::concat_cols({feats, ad::gather_rows(o, g.edge_graph)}));

  // Slot layout: slot k of sample b holds that sample's k-th local edge;
  // unused slots read the appended zero row.
  auto slot_idx = std::make_shared<ad::Index>(static_cast<std::size_t>(b_n) * slots, e_n);
  auto block_idx = std::make_shared<ad::Index>(static_cast<std::size_t>(b_n) * slots);
  Mat mask(b_n, slots);
  {
    int e0 = 0;
    for (int b = 0; b < b_n; ++b) {
      for (int k = 0; k < parts[b].num_edges; ++k) (*slot_idx)[b * slots + k] = e0 + k;
      for (int k = 0; k < slots; ++k) (*block_idx)[b * slots + k] = b;
      e0 += parts[b].num_edges;
      mask.row(b) = obs[b]->mask;
    }
  }
  Var padded_scores = ad::reshape(
      ad::gather_rows(ad::concat_rows({scores, t.constant(Mat::Zero(1, 1))}), slot_idx), b_n, slots);
  Var logits = ad::add(selector_(t, o), padded_scores);
  out.log_probs = ad::masked_log_softmax(logits, mask);
  out.probs = ad::masked_softmax(logits, mask);
  out.neg_entropy = ad::row_sum(ad::mul(out.probs, out.log_probs));

  Mat hard = Mat::Zero(b_n, slots);
  out.edge.assign(b_n, -1);
  if (mode == ActMode::Sample) {
    std::uniform_real_distribution<double> u01(std::numeric_limits<double>::min(), 1.0);
    Mat gumbel(b_n, slots);
    for (Eigen::Index i = 0; i < gumbel.size(); ++i) gumbel.data()[i] = -std::log(-std::log(u01(rng)));
    const Mat perturbed = logits.value() + gumbel;
    for (int b = 0; b < b_n; ++b) {
      int best = -1;
      for (int k = 0; k < slots; ++k)
        if (mask(b, k) != 0 && (best < 0 || perturbed(b, k) > perturbed(b, best))) best = k;
      out.edge[b] = best;
      hard(b, best) = 1.0;
    }
    Var soft = ad::masked_softmax(ad::scale(ad::add(logits, t.constant(gumbel)), 1.0 / cfg_.gumbel_temperature), mask);
    out.selection = ad::straight_through(soft, hard);
  } else {
    for (int b = 0; b < b_n; ++b) {
      int best = -1;
      for (int k = 0; k < slots; ++k)
        if (mask(b, k) != 0 && (best < 0 || logits.value()(b, k) > logits.value()(b, best))) best = k;
      out.edge[b] = best;
      hard(b, best) = 1.0;
    }
    out.selection = t.constant(hard);
  }

  // Features of the selected edge: sum over slots of selection * features.
  Var padded_feats = ad::gather_rows(ad::concat_rows({feats, t.constant(Mat::Zero(1, f_dim))}), slot_idx);
  Var weighted = ad::mul_rows(padded_feats, ad::reshape(out.selection, b_n * slots, 1));
  Var selected = ad::scale(ad::scatter_mean_rows(weighted, block_idx, b_n), static_cast<double>(slots));

  Var head = corrector_(t, ad::concat_cols({o, selected}));
  out.mean = ad::slice_cols(head, 0, 3);
  out.log_std = ad::clamp(ad::slice_cols(head, 3, 3), cfg_.log_std_min, cfg_.log_std_max);
  if (mode == ActMode::Sample) {
    std::normal_distribution<double> n01;
    Mat noise(b_n, 3);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = n01(rng);
    Var u = ad::add(out.mean, ad::mul(ad::exp(out.log_std), t.constant(noise)));
    out.action = ad::tanh(u);
    out.log_prob_action = squashed_gaussian_log_prob(u, out.mean, out.log_std);
  } else {
    out.action = ad::tanh(out.mean);
    out.log_prob_action = squashed_gaussian_log_prob(out.mean, out.mean, out.log_std);
  }
  return out;
}

void Actor::collect(std::vector<ad::Parameter*>& out) {
  encoder_.collect(out);
  out.push_back(&edge_embed_);
  memory_.collect(out);
  selector_.collect(out);
  edge_score_.collect(out);
  corrector_.collect(out);
}

std::vector<ad::Parameter*> Actor::parameters() {
  std::vector<ad::Parameter*> out;
  collect(out);
  return out;
}

Actor Actor::clone(const std::string& name) const {
  Actor copy = *this;
  for (auto* p : copy.parameters()) {
    if (p->name.starts_with(name_)) p->name = name + p->name.substr(name_.size());
    p->zero_grad();
  }
  copy.name_ = name;
  return copy;
}

Eigen::Vector3d scale_action(const Eigen::Vector3d& a, const EnvConfig& env) {
  return {a.x() * env.max_translation, a.y() * env.max_translation, a.z() * env.max_rotation};
}

std::vector<Actor> replicate_actors(const std::vector<Actor>& trained, int n_target) {
  if (trained.empty()) throw InvalidSpec("no trained actors to replicate");
  if (n_target < 1) throw InvalidSpec("team size must be >= 1");
  std::vector<Actor> out;
  for (int k = 0; k < n_target; ++k) out.push_back(trained[k % trained.size()].clone("actor" + std::to_string(k)));
  return out;
}

RolloutResult rollout(MarlEnv& env, std::vector<Actor>& actors, ActMode mode, nn::Rng& rng) {
  const int n = env.robots();
  if (static_cast<int>(actors.size()) != n) throw InvalidSpec("one actor per robot required");
  RolloutResult res;
  res.returns.assign(n, 0.0);
  std::vector<RobotObservation> obs(n);
  for (int r = 0; r < n; ++r) {
    obs[r].graph = SubgraphSnapshot::capture(env.subgraph(r));
    obs[r].memory = actors[r].initial_memory();
    obs[r].mask = Mat::Zero(1, actors[r].config().slots);
    obs[r].mask.leftCols(env.horizon(r)).setOnes();
  }
  while (!env.done()) {
    std::vector<Action> joint(n);
    for (int r = 0; r < n; ++r) {
      if (!obs[r].active()) continue;
      Tape t(false);
      const ActorPass pass = actors[r].run(t, {&obs[r]}, mode, rng);
      const Eigen::Vector3d a = pass.action.value().row(0).transpose();
      joint[r] = {pass.edge[0], scale_action(a, env.config())};
      for (int k = 0; k < actors[r].config().memory_layers; ++k) obs[r].memory.row(k) = pass.memory[k].value().row(0);
      obs[r].prev_edge = pass.edge[0];
      obs[r].prev_action = a;
      obs[r].mask(0, pass.edge[0]) = 0.0;
    }
    const StepResult step = env.step(joint);
    ++res.steps;
    for (int r = 0; r < n; ++r) {
      res.returns[r] += step.rewards[r];
      if (joint[r].edge >= 0) obs[r].graph = obs[r].graph.with_measurements(env.subgraph(r));
    }
  }
  return res;
}

}  // namespace mapgo
