#pragma once

// Per-robot actor: edge-conditioned encoder with edge gates, a stacked GRU
// memory, a masked edge selector over a fixed number of slots, and a
// squashed-Gaussian pose corrector conditioned on the selected edge.

#include <memory>
#include <vector>

#include "mapgo/env.hpp"
#include "mapgo/gnn.hpp"
#include "mapgo/nn.hpp"

namespace mapgo {

/// Subgraph state without copying the static parts: the episode-start
/// subgraph and its tensors are shared, only the measurements vary.
struct SubgraphSnapshot {
  std::shared_ptr<const PoseGraph> graph;
  std::shared_ptr<const GraphTensors> base;
  std::shared_ptr<const std::vector<Pose2>> rel;  // current measurement per local edge

  static SubgraphSnapshot capture(const PoseGraph& g);
  /// Same subgraph with new measurements.
  SubgraphSnapshot with_measurements(const PoseGraph& g) const;
  GraphTensors tensors() const;
};

/// One robot's input at one step. Memory is the GRU state before the step.
struct RobotObservation {
  SubgraphSnapshot graph;
  ad::Mat mask;    // 1 x slots, 1 for edges still open
  ad::Mat memory;  // layers x hidden
  int prev_edge = -1;
  Eigen::Vector3d prev_action = Eigen::Vector3d::Zero();  // normalized to [-1, 1]
  /// log(L_t / L_0) of this robot's subgraph. Training-only state for the
  /// centralized critic; actors never read it.
  double log_error_ratio = 0.0;

  bool active() const { return mask.sum() > 0.0; }
};

struct ActorConfig {
  EccConfig encoder;
  int memory_hidden = 128;
  int memory_layers = 2;
  int slots = 200;
  int edge_embedding = 16;
  int score_hidden = 64;
  int corrector_hidden = 512;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  /// Bias of the log-std outputs at initialization.
  double initial_log_std = 0.0;
  double gumbel_temperature = 1.0;

  void validate() const;
};

enum class ActMode { Sample, Greedy };

struct ActorPass {
  std::vector<ad::Var> memory;  // new state per GRU layer, B x hidden
  ad::Var log_probs;            // B x slots, 0 on masked slots
  ad::Var probs;                // B x slots
  ad::Var neg_entropy;          // B x 1, sum p log p
  ad::Var selection;            // B x slots one-hot (straight-through in Sample mode)
  std::vector<int> edge;        // selected slot per sample
  ad::Var action;               // B x 3 in (-1, 1)
  ad::Var log_prob_action;      // B x 1, squashed-Gaussian log density of `action`
  ad::Var mean, log_std;        // B x 3, pre-squash
  ad::Var gates;                // edges of the batch x 1
};

/// Log density of a = tanh(u), u ~ N(mean, exp(log_std)^2), per row, with
/// the change-of-variables term for tanh. u is the pre-squash sample.
ad::Var squashed_gaussian_log_prob(ad::Var u, ad::Var mean, ad::Var log_std);
double squashed_gaussian_log_prob(double a, double mean, double log_std);

class Actor {
 public:
  Actor() = default;
  Actor(const std::string& name, const ActorConfig& cfg, nn::Rng& rng);

  /// Runs the policy on a batch of active observations. Sample mode draws
  /// gate noise, a Gumbel-max edge and a Gaussian correction from rng;
  /// Greedy mode uses deterministic gates, the argmax edge and tanh(mean).
  ActorPass run(ad::Tape& t, const std::vector<const RobotObservation*>& obs, ActMode mode, nn::Rng& rng);

  ad::Mat initial_memory() const;
  const ActorConfig& config() const { return cfg_; }
  EccEncoder& encoder() { return encoder_; }
  void collect(std::vector<ad::Parameter*>& out);
  std::vector<ad::Parameter*> parameters();
  /// Copy with parameter names rewritten to `name`.
  Actor clone(const std::string& name) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  ActorConfig cfg_;
  EccEncoder encoder_;
  ad::Parameter edge_embed_;  // (slots + 1) x edge_embedding, row 0 = no previous edge
  nn::GruStack memory_;
  nn::Linear selector_;
  nn::Mlp edge_score_;
  nn::Mlp corrector_;
};

/// Converts a normalized action to a metric correction.
Eigen::Vector3d scale_action(const Eigen::Vector3d& a, const EnvConfig& env);

/// Round-robin clones: robot k gets trained[k % |trained|].
std::vector<Actor> replicate_actors(const std::vector<Actor>& trained, int n_target);

/// Drives every robot of a reset environment to the end of the episode.
struct RolloutResult {
  std::vector<double> returns;  // per robot, bonus included
  int steps = 0;
};
RolloutResult rollout(MarlEnv& env, std::vector<Actor>& actors, ActMode mode, nn::Rng& rng);

}  // namespace mapgo
