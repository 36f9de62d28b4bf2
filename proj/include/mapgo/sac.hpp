#pragma once

// Multi-robot soft actor-critic over the pose-graph game: per-robot actors,
// a central twin critic that encodes every robot's subgraph with its own
// non-recurrent encoder, FIFO replay, Polyak targets and two
// auto-tuned temperatures (edge choice and correction).

#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapgo/policy.hpp"
#include "mapgo/synthetic.hpp"

namespace mapgo {

struct CriticConfig {
  EccConfig encoder;
  int fusion = 512;
  int hidden = 256;
};

class Critic {
 public:
  Critic() = default;
  Critic(const std::string& name, const CriticConfig& cfg, int robots, int slots, nn::Rng& rng);

  /// Latents of every robot's snapshot, B x (robots * hidden). states[b][r].
  ad::Var encode(ad::Tape& t, const std::vector<std::vector<const SubgraphSnapshot*>>& states);
  static constexpr int kProgress = 3;
  /// Per robot: open edges / slots, a last-edge flag and log(L_t / L_0),
  /// B x robots*kProgress. These let the value separate and predict the
  /// terminal bonus.
  ad::Mat progress(const std::vector<std::vector<const RobotObservation*>>& states) const;
  /// Q from latents, selections (B x robots*slots), actions (B x robots*3)
  /// and progress features.
  ad::Var value(ad::Tape& t, ad::Var latents, ad::Var selections, ad::Var actions, ad::Var progress);

  void collect(std::vector<ad::Parameter*>& out);
  std::vector<ad::Parameter*> parameters();
  int robots() const { return robots_; }
  int slots() const { return slots_; }
  EccEncoder& encoder() { return encoder_; }

 private:
  int robots_ = 0, slots_ = 0;
  EccEncoder encoder_;
  nn::Mlp head_;
};

struct Transition {
  std::vector<RobotObservation> state, next;
  std::vector<int> edges;                 // -1 for idle robots
  std::vector<Eigen::Vector3d> actions;   // normalized
  double reward = 0.0;                    // summed over robots
  bool done = false;
};

/// FIFO replay with a fixed capacity. Appends are totally ordered.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(std::shared_ptr<const Transition> t);
  std::vector<std::shared_ptr<const Transition>> sample(std::size_t n, nn::Rng& rng) const;
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t appended() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<std::shared_ptr<const Transition>> items_;
  std::uint64_t appended_ = 0;
};

struct TrainConfig {
  double gamma = 0.99;
  int buffer = 30000;
  int batch = 64;
  int warmup = 10000;       // environment steps before the first update
  double polyak = 1e-3;
  double lr_actor = 3e-4;
  double lr_critic = 3e-5;
  double lr_temperature = 3e-4;
  double grad_clip = 10.0;
  int update_every = 1;     // environment steps between update rounds
  int updates_per_round = 1;
  double initial_temperature = 1.0;
  double target_entropy_continuous = -3.0;
  double discrete_entropy_factor = 0.5;  // target = factor * log(open edges)
  double gate_temperature_start = 1.0;
  double gate_temperature_end = 0.2;
  int episodes = 500;
  std::uint64_t seed = 0;
  double outlier_fraction = 0.0;  // injected into training graphs
  std::string divergence_checkpoint;  // written before DivergenceDetected; empty disables
  GenSpec graphs{.n_robots = 3, .poses_per_robot = 20};
  EnvConfig env;
  ActorConfig actor;
  CriticConfig critic;

  void validate() const;
  /// Full-size network widths replaced by the small desk-scale set used by
  /// the smoke tests.
  static TrainConfig desk_scale();
};

nlohmann::json to_json(const TrainConfig& c);
/// Overrides from a flat key/value object; unknown keys throw InvalidSpec.
void apply_overrides(TrainConfig& c, const nlohmann::json& kv);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_discrete = 0.0;
  double temperature_continuous = 0.0;
};

struct EpisodeMetrics {
  int episode = 0;
  double episode_return = 0.0;
  int steps = 0;
  double f_before = 0.0, f_after = 0.0;  // objective with original vs corrected measurements
  double l_before = 0.0, l_after = 0.0;
  int updates = 0;
  UpdateStats last;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One episode on g, storing transitions and updating when due.
  EpisodeMetrics run_episode(const PoseGraph& g);
  /// cfg.episodes episodes on generated graphs (seeded from cfg.seed).
  std::vector<EpisodeMetrics> train(const std::function<void(const EpisodeMetrics&)>& on_episode = {});
  UpdateStats update();
  /// Critic loss on a batch; with backprop the critic gradients are filled.
  double critic_loss(const std::vector<std::shared_ptr<const Transition>>& batch, bool backprop);
  std::vector<std::shared_ptr<const Transition>> sample_batch();

  std::vector<Actor>& actors() { return actors_; }
  Critic& critic(int k) { return critics_[k]; }
  Critic& target(int k) { return targets_[k]; }
  const ReplayBuffer& replay() const { return replay_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t updates() const { return updates_; }
  double temperature_discrete() const;
  double temperature_continuous() const;

  std::vector<ad::Parameter*> actor_parameters();
  std::vector<ad::Parameter*> critic_parameters();
  std::vector<ad::Parameter*> all_parameters();
  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);
  nlohmann::json manifest(const std::vector<EpisodeMetrics>& log) const;

 private:
  void check_finite(double v, const char* what);

  TrainConfig cfg_;
  nn::Rng rng_;
  std::vector<Actor> actors_;
  Critic critics_[2];
  Critic targets_[2];
  ad::Parameter log_alpha_d_, log_alpha_c_;
  std::unique_ptr<nn::Adam> actor_opt_, critic_opt_, alpha_opt_;
  ReplayBuffer replay_;
  MarlEnv env_;
  std::int64_t env_steps_ = 0;
  std::int64_t updates_ = 0;
  int episode_ = 0;
  ad::Mat latents_[2];  // critic encodings of the last critic batch
  ad::Mat progress_;    // and its progress features
};

void write_metrics_csv(std::ostream& os, const std::vector<EpisodeMetrics>& log, bool header = true);

}  // namespace mapgo
