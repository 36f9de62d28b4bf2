#pragma once

// Small dense building blocks on top of the autodiff tape: linear layers,
// tanh perceptrons, a stacked GRU, Adam and Polyak averaging.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mapgo/autodiff.hpp"

namespace mapgo::nn {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;

using Rng = std::mt19937_64;

/// Xavier-uniform initialised fan_in x fan_out matrix, scaled by `gain`.
Mat xavier(Rng& rng, int fan_in, int fan_out, double gain = 1.0);

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, double gain = 1.0);
  Var operator()(Tape& t, Var x);
  int in() const { return static_cast<int>(weight.value.rows()); }
  int out() const { return static_cast<int>(weight.value.cols()); }
  void collect(std::vector<Parameter*>& out);
};

/// Perceptron with tanh between layers and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  /// dims = {in, hidden..., out}. The output layer is scaled by out_gain.
  Mlp(const std::string& name, const std::vector<int>& dims, Rng& rng, double out_gain = 1.0);
  Var operator()(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
};

struct GruCell {
  Parameter wx, wh, bx, bh;  // gates ordered (reset, update, candidate)
  int hidden = 0;

  GruCell() = default;
  GruCell(const std::string& name, int in, int hidden, Rng& rng);
  Var operator()(Tape& t, Var x, Var h);
  void collect(std::vector<Parameter*>& out);
};

/// K stacked GRU cells; layer k > 0 consumes layer k - 1's new state.
struct GruStack {
  std::vector<GruCell> cells;

  GruStack() = default;
  GruStack(const std::string& name, int in, int hidden, int layers, Rng& rng);
  int hidden() const { return cells.empty() ? 0 : cells.front().hidden; }
  int depth() const { return static_cast<int>(cells.size()); }
  /// state: one B x hidden matrix per layer; returns the new states.
  std::vector<Var> operator()(Tape& t, Var x, const std::vector<Var>& state);
  void collect(std::vector<Parameter*>& out);
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  /// Applies one update from the accumulated gradients and clears them.
  void step();
  void zero_grad();
  const std::vector<Parameter*>& params() const { return params_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  std::int64_t t_ = 0;
};

/// Scales gradients so their joint L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

/// target <- (1 - tau) target + tau source, entry by entry.
void polyak_update(const std::vector<Parameter*>& target, const std::vector<Parameter*>& source, double tau);
void copy_values(const std::vector<Parameter*>& target, const std::vector<Parameter*>& source);
bool all_finite(const std::vector<Parameter*>& params);

}  // namespace mapgo::nn
