#include "mapgo/sac.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "mapgo/checkpoint.hpp"
#include "mapgo/objective.hpp"

namespace mapgo {

using ad::Mat;
using ad::Tape;
using ad::Var;

Critic::Critic(const std::string& name, const CriticConfig& cfg, int robots, int slots, nn::Rng& rng)
    : robots_(robots), slots_(slots) {
  encoder_ = EccEncoder(name + ".encoder", cfg.encoder, rng);
  const int in = robots * (cfg.encoder.hidden + slots + 6 + kProgress);
  head_ = nn::Mlp(name + ".head", {in, cfg.fusion, cfg.hidden, 1}, rng);
}

Var Critic::encode(Tape& t, const std::vector<std::vector<const SubgraphSnapshot*>>& states) {
  std::vector<GraphTensors> parts;
  for (const auto& row : states) {
    if (static_cast<int>(row.size()) != robots_) throw InvalidSpec("critic needs every robot's subgraph");
    for (const auto* s : row) parts.push_back(s->tensors());
  }
  std::vector<const GraphTensors*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  const auto out = encoder_.forward(t, batch_graphs(ptrs), GateMode::Deterministic);
  return ad::reshape(out.latent, static_cast<int>(states.size()), robots_ * encoder_.config().hidden);
}

Mat Critic::progress(const std::vector<std::vector<const RobotObservation*>>& states) const {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(states.size()), robots_ * kProgress);
  for (std::size_t b = 0; b < states.size(); ++b)
    for (int r = 0; r < robots_; ++r) {
      const double open = states[b][r]->mask.sum();
      out(b, kProgress * r) = open / slots_;
      out(b, kProgress * r + 1) = open <= 1.0 ? 1.0 : 0.0;
      out(b, kProgress * r + 2) = states[b][r]->log_error_ratio;
    }
  return out;
}

Var Critic::value(Tape& t, Var latents, Var selections, Var actions, Var progress) {
  // Per robot [latent || selection || action || action^2 || progress], robots
  // in index order. The squares expose correction size directly.
  const int d = encoder_.config().hidden;
  std::vector<Var> parts;
  for (int r = 0; r < robots_; ++r) {
    parts.push_back(ad::slice_cols(latents, r * d, d));
    parts.push_back(ad::slice_cols(selections, r * slots_, slots_));
    Var a = ad::slice_cols(actions, r * 3, 3);
    parts.push_back(a);
    parts.push_back(ad::square(a));
    parts.push_back(ad::slice_cols(progress, r * kProgress, kProgress));
  }
  return head_(t, ad::concat_cols(parts));
}

void Critic::collect(std::vector<ad::Parameter*>& out) {
  encoder_.collect(out);
  head_.collect(out);
}

std::vector<ad::Parameter*> Critic::parameters() {
  std::vector<ad::Parameter*> out;
  collect(out);
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidSpec("replay capacity must be > 0");
}

void ReplayBuffer::push(std::shared_ptr<const Transition> t) {
  std::lock_guard lock(mu_);
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
  ++appended_;
}

std::vector<std::shared_ptr<const Transition>> ReplayBuffer::sample(std::size_t n, nn::Rng& rng) const {
  std::lock_guard lock(mu_);
  if (items_.empty()) throw InvalidSpec("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::shared_ptr<const Transition>> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(items_[pick(rng)]);
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::uint64_t ReplayBuffer::appended() const {
  std::lock_guard lock(mu_);
  return appended_;
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidSpec("gamma must be in [0, 1]");
  if (buffer < 1 || batch < 1 || warmup < 0 || episodes < 0) throw InvalidSpec("buffer, batch, warmup, episodes out of range");
  if (!(polyak > 0.0 && polyak <= 1.0)) throw InvalidSpec("polyak must be in (0, 1]");
  if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_temperature > 0.0)) throw InvalidSpec("learning rates must be > 0");
  if (update_every < 1 || updates_per_round < 1) throw InvalidSpec("update schedule must be >= 1");
  if (!(initial_temperature > 0.0)) throw InvalidSpec("initial temperature must be > 0");
  if (!(gate_temperature_start > 0.0 && gate_temperature_end > 0.0)) throw InvalidSpec("gate temperatures must be > 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) throw InvalidSpec("outlier fraction must be in [0, 1]");
  if (env.max_local_edges != actor.slots) throw InvalidSpec("environment edge limit must equal the selector width");
  graphs.validate();
  env.validate();
  actor.validate();
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.batch = 32;
  c.warmup = 500;
  c.update_every = 16;
  c.actor.encoder.hidden = 8;
  c.actor.encoder.edge_hidden = 8;
  c.actor.encoder.gate_hidden = 8;
  c.actor.memory_hidden = 32;
  c.actor.edge_embedding = 8;
  c.actor.score_hidden = 32;
  c.actor.corrector_hidden = 128;
  c.critic.encoder = c.actor.encoder;
  c.critic.encoder.gates = true;
  c.critic.fusion = 128;
  c.critic.hidden = 64;
  // About 1k updates fit the budget, so steps are larger than at full scale.
  c.polyak = 0.01;
  c.lr_actor = 1e-3;
  c.lr_critic = 1e-3;
  c.lr_temperature = 1e-3;
  c.initial_temperature = 0.05;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  const auto& e = c.actor.encoder;
  return {
      {"gamma", c.gamma},
      {"buffer", c.buffer},
      {"batch", c.batch},
      {"warmup", c.warmup},
      {"polyak", c.polyak},
      {"lr_actor", c.lr_actor},
      {"lr_critic", c.lr_critic},
      {"lr_temperature", c.lr_temperature},
      {"grad_clip", c.grad_clip},
      {"update_every", c.update_every},
      {"updates_per_round", c.updates_per_round},
      {"initial_temperature", c.initial_temperature},
      {"target_entropy_continuous", c.target_entropy_continuous},
      {"discrete_entropy_factor", c.discrete_entropy_factor},
      {"gate_temperature_start", c.gate_temperature_start},
      {"gate_temperature_end", c.gate_temperature_end},
      {"episodes", c.episodes},
      {"seed", c.seed},
      {"outlier_fraction", c.outlier_fraction},
      {"robots", c.graphs.n_robots},
      {"poses_per_robot", c.graphs.poses_per_robot},
      {"loop_ratio", c.graphs.loop_ratio},
      {"sigma_odom", c.graphs.profile.sigma_odom},
      {"sigma_intraloop", c.graphs.profile.sigma_intraloop},
      {"sigma_inter", c.graphs.profile.sigma_inter},
      {"gnn_layers", e.layers},
      {"hidden", e.hidden},
      {"edge_hidden", e.edge_hidden},
      {"gate_hidden", e.gate_hidden},
      {"per_layer_gates", e.per_layer_gates},
      {"beta_interloop", e.gate.beta_interloop},
      {"l1_weight", e.gate.l1_weight},
      {"gate_threshold", e.gate.threshold},
      {"memory_hidden", c.actor.memory_hidden},
      {"memory_layers", c.actor.memory_layers},
      {"slots", c.actor.slots},
      {"edge_embedding", c.actor.edge_embedding},
      {"score_hidden", c.actor.score_hidden},
      {"corrector_hidden", c.actor.corrector_hidden},
      {"initial_log_std", c.actor.initial_log_std},
      {"critic_hidden", c.critic.encoder.hidden},
      {"critic_fusion", c.critic.fusion},
      {"critic_head", c.critic.hidden},
      {"max_translation", c.env.max_translation},
      {"max_rotation", c.env.max_rotation},
      {"balance_tol", c.env.balance_tol},
      {"bonus_scale", c.env.reward.bonus_scale},
      {"reward_clip", c.env.reward.clip},
      {"reward_epsilon", c.env.reward.epsilon},
  };
}

void apply_overrides(TrainConfig& c, const nlohmann::json& kv) {
  auto& e = c.actor.encoder;
  for (const auto& [key, v] : kv.items()) {
    if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "buffer") c.buffer = v.get<int>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "warmup") c.warmup = v.get<int>();
    else if (key == "polyak") c.polyak = v.get<double>();
    else if (key == "lr_actor") c.lr_actor = v.get<double>();
    else if (key == "lr_critic") c.lr_critic = v.get<double>();
    else if (key == "lr_temperature") c.lr_temperature = v.get<double>();
    else if (key == "grad_clip") c.grad_clip = v.get<double>();
    else if (key == "update_every") c.update_every = v.get<int>();
    else if (key == "updates_per_round") c.updates_per_round = v.get<int>();
    else if (key == "initial_temperature") c.initial_temperature = v.get<double>();
    else if (key == "target_entropy_continuous") c.target_entropy_continuous = v.get<double>();
    else if (key == "discrete_entropy_factor") c.discrete_entropy_factor = v.get<double>();
    else if (key == "gate_temperature_start") c.gate_temperature_start = v.get<double>();
    else if (key == "gate_temperature_end") c.gate_temperature_end = v.get<double>();
    else if (key == "episodes") c.episodes = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "outlier_fraction") c.outlier_fraction = v.get<double>();
    else if (key == "robots") c.graphs.n_robots = c.env.n_robots = v.get<int>();
    else if (key == "poses_per_robot") c.graphs.poses_per_robot = v.get<int>();
    else if (key == "loop_ratio") c.graphs.loop_ratio = v.get<double>();
    else if (key == "noise") c.graphs.profile = NoiseProfile::named(v.get<std::string>());
    else if (key == "sigma_odom") c.graphs.profile.sigma_odom = v.get<double>();
    else if (key == "sigma_intraloop") c.graphs.profile.sigma_intraloop = v.get<double>();
    else if (key == "sigma_inter") c.graphs.profile.sigma_inter = v.get<double>();
    else if (key == "gnn_layers") e.layers = c.critic.encoder.layers = v.get<int>();
    else if (key == "hidden") e.hidden = v.get<int>();
    else if (key == "edge_hidden") e.edge_hidden = c.critic.encoder.edge_hidden = v.get<int>();
    else if (key == "gate_hidden") e.gate_hidden = c.critic.encoder.gate_hidden = v.get<int>();
    else if (key == "per_layer_gates") e.per_layer_gates = v.get<bool>();
    else if (key == "beta_interloop") e.gate.beta_interloop = c.critic.encoder.gate.beta_interloop = v.get<double>();
    else if (key == "l1_weight") e.gate.l1_weight = v.get<double>();
    else if (key == "gate_threshold") e.gate.threshold = v.get<double>();
    else if (key == "memory_hidden") c.actor.memory_hidden = v.get<int>();
    else if (key == "memory_layers") c.actor.memory_layers = v.get<int>();
    else if (key == "slots") c.actor.slots = c.env.max_local_edges = v.get<int>();
    else if (key == "edge_embedding") c.actor.edge_embedding = v.get<int>();
    else if (key == "score_hidden") c.actor.score_hidden = v.get<int>();
    else if (key == "corrector_hidden") c.actor.corrector_hidden = v.get<int>();
    else if (key == "initial_log_std") c.actor.initial_log_std = v.get<double>();
    else if (key == "critic_hidden") c.critic.encoder.hidden = v.get<int>();
    else if (key == "critic_fusion") c.critic.fusion = v.get<int>();
    else if (key == "critic_head") c.critic.hidden = v.get<int>();
    else if (key == "max_translation") c.env.max_translation = v.get<double>();
    else if (key == "max_rotation") c.env.max_rotation = v.get<double>();
    else if (key == "balance_tol") c.env.balance_tol = v.get<double>();
    else if (key == "bonus_scale") c.env.reward.bonus_scale = v.get<double>();
    else if (key == "reward_clip") c.env.reward.clip = v.get<double>();
    else if (key == "reward_epsilon") c.env.reward.epsilon = v.get<double>();
    else throw InvalidSpec("unknown training key '" + key + "'");
  }
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), rng_(cfg_.seed), replay_(static_cast<std::size_t>(cfg_.buffer)), env_(cfg_.env) {
  cfg_.env.n_robots = cfg_.graphs.n_robots;
  cfg_.validate();
  env_ = MarlEnv(cfg_.env);
  for (int r = 0; r < cfg_.graphs.n_robots; ++r) actors_.emplace_back("actor" + std::to_string(r), cfg_.actor, rng_);
  for (int k = 0; k < 2; ++k) {
    critics_[k] = Critic("critic" + std::to_string(k), cfg_.critic, cfg_.graphs.n_robots, cfg_.actor.slots, rng_);
    targets_[k] = critics_[k];
    for (auto* p : targets_[k].parameters()) p->name = "target_" + p->name;
  }
  const double la = std::log(cfg_.initial_temperature);
  log_alpha_d_ = ad::Parameter("log_alpha_discrete", Mat::Constant(1, 1, la));
  log_alpha_c_ = ad::Parameter("log_alpha_continuous", Mat::Constant(1, 1, la));
  actor_opt_ = std::make_unique<nn::Adam>(actor_parameters(), nn::AdamConfig{.lr = cfg_.lr_actor});
  critic_opt_ = std::make_unique<nn::Adam>(critic_parameters(), nn::AdamConfig{.lr = cfg_.lr_critic});
  alpha_opt_ = std::make_unique<nn::Adam>(std::vector<ad::Parameter*>{&log_alpha_d_, &log_alpha_c_},
                                          nn::AdamConfig{.lr = cfg_.lr_temperature});
}

double Trainer::temperature_discrete() const { return std::exp(log_alpha_d_.value(0, 0)); }
double Trainer::temperature_continuous() const { return std::exp(log_alpha_c_.value(0, 0)); }

std::vector<ad::Parameter*> Trainer::actor_parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& a : actors_) a.collect(out);
  return out;
}

std::vector<ad::Parameter*> Trainer::critic_parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& c : critics_) c.collect(out);
  return out;
}

std::vector<ad::Parameter*> Trainer::all_parameters() {
  auto out = actor_parameters();
  for (auto& c : critics_) c.collect(out);
  for (auto& c : targets_) c.collect(out);
  out.push_back(&log_alpha_d_);
  out.push_back(&log_alpha_c_);
  return out;
}

void Trainer::check_finite(double v, const char* what) {
  if (std::isfinite(v)) return;
  if (!cfg_.divergence_checkpoint.empty()) save(cfg_.divergence_checkpoint);
  throw DivergenceDetected(std::string("non-finite ") + what + " after " + std::to_string(updates_) + " updates");
}

EpisodeMetrics Trainer::run_episode(const PoseGraph& g) {
  const int n = cfg_.graphs.n_robots;
  env_.reset(g);
  const double frac = cfg_.episodes > 1 ? std::min(1.0, episode_ / static_cast<double>(cfg_.episodes - 1)) : 1.0;
  const double tau = cfg_.gate_temperature_start + frac * (cfg_.gate_temperature_end - cfg_.gate_temperature_start);
  for (auto& a : actors_) a.encoder().config().gate.temperature = tau;

  EpisodeMetrics m;
  m.last.temperature_discrete = temperature_discrete();
  m.last.temperature_continuous = temperature_continuous();
  m.episode = episode_++;
  m.f_before = objective_F(g);
  m.l_before = env_.initial_localization();
  const std::int64_t updates_before = updates_;

  std::vector<RobotObservation> obs(n);
  std::vector<double> l0(n, 0.0);
  const bool privileged = env_.rewards_enabled();
  for (int r = 0; r < n; ++r) {
    if (privileged) l0[r] = env_.localization(r);
    obs[r].graph = SubgraphSnapshot::capture(env_.subgraph(r));
    obs[r].memory = actors_[r].initial_memory();
    obs[r].mask = Mat::Zero(1, cfg_.actor.slots);
    obs[r].mask.leftCols(env_.horizon(r)).setOnes();
  }
  while (!env_.done()) {
    auto tr = std::make_shared<Transition>();
    tr->state = obs;
    tr->edges.assign(n, -1);
    tr->actions.assign(n, Eigen::Vector3d::Zero());
    std::vector<Action> joint(n);
    for (int r = 0; r < n; ++r) {
      if (!obs[r].active()) continue;
      Tape t(false);
      const ActorPass pass = actors_[r].run(t, {&obs[r]}, ActMode::Sample, rng_);
      const Eigen::Vector3d a = pass.action.value().row(0).transpose();
      joint[r] = {pass.edge[0], scale_action(a, cfg_.env)};
      tr->edges[r] = pass.edge[0];
      tr->actions[r] = a;
      for (int k = 0; k < cfg_.actor.memory_layers; ++k) obs[r].memory.row(k) = pass.memory[k].value().row(0);
      obs[r].prev_edge = pass.edge[0];
      obs[r].prev_action = a;
      obs[r].mask(0, pass.edge[0]) = 0.0;
    }
    const StepResult step = env_.step(joint);
    for (int r = 0; r < n; ++r) {
      if (tr->edges[r] >= 0) obs[r].graph = obs[r].graph.with_measurements(env_.subgraph(r));
      if (privileged && l0[r] > 0.0) obs[r].log_error_ratio = std::log((env_.localization(r) + 1e-12) / l0[r]);
      tr->reward += step.rewards[r];
    }
    m.episode_return += tr->reward;
    tr->next = obs;
    tr->done = step.done;
    replay_.push(std::move(tr));
    ++m.steps;
    ++env_steps_;
    if (env_steps_ >= cfg_.warmup && static_cast<int>(replay_.size()) >= cfg_.batch && env_steps_ % cfg_.update_every == 0)
      for (int k = 0; k < cfg_.updates_per_round; ++k) m.last = update();
  }
  const PoseGraph corrected = env_.merged();
  m.f_after = objective_F(corrected);
  if (env_.rewards_enabled()) m.l_after = localization_error_L(corrected);
  m.updates = static_cast<int>(updates_ - updates_before);
  return m;
}

std::vector<EpisodeMetrics> Trainer::train(const std::function<void(const EpisodeMetrics&)>& on_episode) {
  std::vector<EpisodeMetrics> log;
  nn::Rng graph_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int e = 0; e < cfg_.episodes; ++e) {
    GenSpec spec = cfg_.graphs;
    spec.seed = graph_rng();
    PoseGraph g = generate(spec);
    if (cfg_.outlier_fraction > 0.0) {
      try {
        g = inject_outliers(g, cfg_.outlier_fraction, graph_rng()).graph;
      } catch (const NoEligibleEdges&) {
      }
    }
    log.push_back(run_episode(g));
    if (on_episode) on_episode(log.back());
  }
  return log;
}

std::vector<std::shared_ptr<const Transition>> Trainer::sample_batch() {
  return replay_.sample(static_cast<std::size_t>(cfg_.batch), rng_);
}

namespace {

struct JointActions {
  Mat selections;  // B x n*slots
  Mat actions;     // B x n*3
  Mat entropy;     // B x 1, sum over robots of alpha_d * neg_entropy + alpha_c * log_prob
};

std::vector<std::vector<const RobotObservation*>> observations(
    const std::vector<std::shared_ptr<const Transition>>& batch, bool next) {
  std::vector<std::vector<const RobotObservation*>> out;
  for (const auto& tr : batch) {
    std::vector<const RobotObservation*> row;
    for (const auto& o : next ? tr->next : tr->state) row.push_back(&o);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::vector<const SubgraphSnapshot*>> snapshots(
    const std::vector<std::shared_ptr<const Transition>>& batch, bool next) {
  std::vector<std::vector<const SubgraphSnapshot*>> out;
  for (const auto& tr : batch) {
    std::vector<const SubgraphSnapshot*> row;
    for (const auto& o : next ? tr->next : tr->state) row.push_back(&o.graph);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

double Trainer::critic_loss(const std::vector<std::shared_ptr<const Transition>>& batch, bool backprop) {
  const int b_n = static_cast<int>(batch.size());
  const int n = cfg_.graphs.n_robots;
  const int slots = cfg_.actor.slots;
  const double alpha_d = temperature_discrete(), alpha_c = temperature_continuous();

  // Soft target from the current policies at the next states.
  Mat sel_next = Mat::Zero(b_n, n * slots), act_next = Mat::Zero(b_n, n * 3);
  Mat ent = Mat::Zero(b_n, 1);
  for (int r = 0; r < n; ++r) {
    std::vector<const RobotObservation*> obs;
    std::vector<int> rows;
    for (int b = 0; b < b_n; ++b)
      if (!batch[b]->done && batch[b]->next[r].active()) {
        obs.push_back(&batch[b]->next[r]);
        rows.push_back(b);
      }
    if (obs.empty()) continue;
    Tape t(false);
    const ActorPass p = actors_[r].run(t, obs, ActMode::Sample, rng_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int b = rows[i];
      sel_next(b, r * slots + p.edge[i]) = 1.0;
      act_next.block(b, r * 3, 1, 3) = p.action.value().row(i);
      ent(b, 0) += alpha_d * p.neg_entropy.value()(i, 0) + alpha_c * p.log_prob_action.value()(i, 0);
    }
  }
  Mat y(b_n, 1);
  {
    Tape t(false);
    const auto next = snapshots(batch, true);
    Var prog = t.constant(targets_[0].progress(observations(batch, true)));
    Var q1 = targets_[0].value(t, targets_[0].encode(t, next), t.constant(sel_next), t.constant(act_next), prog);
    Var q2 = targets_[1].value(t, targets_[1].encode(t, next), t.constant(sel_next), t.constant(act_next), prog);
    for (int b = 0; b < b_n; ++b) {
      const double soft_v = std::min(q1.value()(b, 0), q2.value()(b, 0)) - ent(b, 0);
      y(b, 0) = batch[b]->reward + (batch[b]->done ? 0.0 : cfg_.gamma * soft_v);
    }
  }

  Mat sel = Mat::Zero(b_n, n * slots), act = Mat::Zero(b_n, n * 3);
  for (int b = 0; b < b_n; ++b)
    for (int r = 0; r < n; ++r)
      if (batch[b]->edges[r] >= 0) {
        sel(b, r * slots + batch[b]->edges[r]) = 1.0;
        act.block(b, r * 3, 1, 3) = batch[b]->actions[r].transpose();
      }
  Tape t(backprop);
  const auto cur = snapshots(batch, false);
  Var target = t.constant(y);
  Var loss = t.constant(Mat::Zero(1, 1));
  progress_ = critics_[0].progress(observations(batch, false));
  Var prog = t.constant(progress_);
  for (int k = 0; k < 2; ++k) {
    Var lat = critics_[k].encode(t, cur);
    latents_[k] = lat.value();
    Var q = critics_[k].value(t, lat, t.constant(sel), t.constant(act), prog);
    loss = ad::add(loss, ad::mean(ad::square(ad::sub(q, target))));
  }
  if (backprop) t.backward(loss);
  return loss.scalar();
}

UpdateStats Trainer::update() {
  UpdateStats stats;
  const auto batch = sample_batch();
  const int b_n = static_cast<int>(batch.size());
  const int n = cfg_.graphs.n_robots;
  const int slots = cfg_.actor.slots;

  critic_opt_->zero_grad();
  stats.critic_loss = critic_loss(batch, true);
  check_finite(stats.critic_loss, "critic loss");
  nn::clip_grad_norm(critic_opt_->params(), cfg_.grad_clip);
  critic_opt_->step();

  // Actor step: every robot's action is resampled from its current policy.
  const double alpha_d = temperature_discrete(), alpha_c = temperature_continuous();
  Tape t;
  t.freeze(critic_parameters());
  std::vector<Var> sel_parts, act_parts;
  Var penalty = t.constant(Mat::Zero(1, 1));
  double d_sum = 0.0, c_sum = 0.0;
  int active = 0;
  for (int r = 0; r < n; ++r) {
    std::vector<const RobotObservation*> obs;
    auto rows = std::make_shared<ad::Index>(b_n, -1);
    for (int b = 0; b < b_n; ++b)
      if (batch[b]->state[r].active()) {
        (*rows)[b] = static_cast<int>(obs.size());
        obs.push_back(&batch[b]->state[r]);
      }
    if (obs.empty()) {
      sel_parts.push_back(t.constant(Mat::Zero(b_n, slots)));
      act_parts.push_back(t.constant(Mat::Zero(b_n, 3)));
      continue;
    }
    const int m = static_cast<int>(obs.size());
    for (int& i : *rows)
      if (i < 0) i = m;  // zero row for idle robots
    const ActorPass p = actors_[r].run(t, obs, ActMode::Sample, rng_);
    sel_parts.push_back(ad::gather_rows(ad::concat_rows({p.selection, t.constant(Mat::Zero(1, slots))}), rows));
    act_parts.push_back(ad::gather_rows(ad::concat_rows({p.action, t.constant(Mat::Zero(1, 3))}), rows));
    penalty = ad::add(penalty, ad::add(ad::scale(ad::sum(p.neg_entropy), alpha_d),
                                       ad::scale(ad::sum(p.log_prob_action), alpha_c)));
    penalty = ad::add(penalty, ad::scale(ad::sum(ad::abs(p.gates)), cfg_.actor.encoder.gate.l1_weight));
    for (int i = 0; i < m; ++i) {
      const double open = obs[i]->mask.sum();
      d_sum += p.neg_entropy.value()(i, 0) + cfg_.discrete_entropy_factor * std::log(open);
      c_sum += p.log_prob_action.value()(i, 0) + cfg_.target_entropy_continuous;
    }
    active += m;
  }
  Var sel = ad::concat_cols(sel_parts), act = ad::concat_cols(act_parts);
  Var prog = t.constant(progress_);
  Var q1 = critics_[0].value(t, t.constant(latents_[0]), sel, act, prog);
  Var q2 = critics_[1].value(t, t.constant(latents_[1]), sel, act, prog);
  Var loss = ad::scale(ad::sub(penalty, ad::sum(ad::minimum(q1, q2))), 1.0 / b_n);
  stats.actor_loss = loss.scalar();
  check_finite(stats.actor_loss, "actor loss");
  actor_opt_->zero_grad();
  t.backward(loss);
  nn::clip_grad_norm(actor_opt_->params(), cfg_.grad_clip);
  actor_opt_->step();

  // Temperature losses -log(alpha) * (log pi + target), with log pi detached.
  if (active > 0) {
    log_alpha_d_.grad(0, 0) = -d_sum / active;
    log_alpha_c_.grad(0, 0) = -c_sum / active;
    alpha_opt_->step();
  }
  for (int k = 0; k < 2; ++k) nn::polyak_update(targets_[k].parameters(), critics_[k].parameters(), cfg_.polyak);
  ++updates_;
  stats.temperature_discrete = temperature_discrete();
  stats.temperature_continuous = temperature_continuous();
  return stats;
}

void Trainer::save(const std::filesystem::path& path) { save_checkpoint(path, all_parameters()); }

void Trainer::load(const std::filesystem::path& path) { load_checkpoint(path, all_parameters()); }

nlohmann::json Trainer::manifest(const std::vector<EpisodeMetrics>& log) const {
  nlohmann::json j;
  j["config"] = to_json(cfg_);
  j["seed"] = cfg_.seed;
  j["episodes"] = log.size();
  j["env_steps"] = env_steps_;
  j["updates"] = updates_;
  auto mean_return = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t k = from; k < to; ++k) s += log[k].episode_return;
    return to > from ? s / static_cast<double>(to - from) : 0.0;
  };
  const std::size_t w = std::min<std::size_t>(50, log.size());
  j["metrics"] = {{"mean_return_first", mean_return(0, w)},
                  {"mean_return_last", mean_return(log.size() - w, log.size())},
                  {"temperature_discrete", temperature_discrete()},
                  {"temperature_continuous", temperature_continuous()}};
  return j;
}

void write_metrics_csv(std::ostream& os, const std::vector<EpisodeMetrics>& log, bool header) {
  if (header)
    os << "episode,return,steps,f_before,f_after,l_before,l_after,updates,critic_loss,actor_loss,alpha_discrete,"
        "alpha_continuous\n";
  char buf[512];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", m.episode,
                  m.episode_return, m.steps, m.f_before, m.f_after, m.l_before, m.l_after, m.updates,
                  m.last.critic_loss, m.last.actor_loss, m.last.temperature_discrete, m.last.temperature_continuous);
    os << buf;
  }
}

}  // namespace mapgo
