#include "mapgo/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mapgo::nn {

Mat xavier(Rng& rng, int fan_in, int fan_out, double gain) {
  const double a = gain * std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Mat m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng, double gain)
    : weight(name + ".weight", xavier(rng, in, out, gain)), bias(name + ".bias", Mat::Zero(1, out)) {}

Var Linear::operator()(Tape& t, Var x) { return ad::add(ad::matmul(x, t.param(weight)), t.param(bias)); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, const std::vector<int>& dims, Rng& rng, double out_gain) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least an input and an output size");
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const bool last = k + 2 == dims.size();
    layers.emplace_back(name + "." + std::to_string(k), dims[k], dims[k + 1], rng, last ? out_gain : 1.0);
  }
}

Var Mlp::operator()(Tape& t, Var x) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    x = layers[k](t, x);
    if (k + 1 < layers.size()) x = ad::tanh(x);
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

GruCell::GruCell(const std::string& name, int in, int h, Rng& rng)
    : wx(name + ".wx", xavier(rng, in, 3 * h)),
      wh(name + ".wh", xavier(rng, h, 3 * h)),
      bx(name + ".bx", Mat::Zero(1, 3 * h)),
      bh(name + ".bh", Mat::Zero(1, 3 * h)),
      hidden(h) {}

Var GruCell::operator()(Tape& t, Var x, Var h) {
  using namespace ad;
  Var gx = add(matmul(x, t.param(wx)), t.param(bx));
  Var gh = add(matmul(h, t.param(wh)), t.param(bh));
  Var r = sigmoid(add(slice_cols(gx, 0, hidden), slice_cols(gh, 0, hidden)));
  Var z = sigmoid(add(slice_cols(gx, hidden, hidden), slice_cols(gh, hidden, hidden)));
  Var n = tanh(add(slice_cols(gx, 2 * hidden, hidden), mul(r, slice_cols(gh, 2 * hidden, hidden))));
  // (1 - z) * n + z * h
  return add(n, mul(z, sub(h, n)));
}

void GruCell::collect(std::vector<Parameter*>& out) {
  for (auto* p : {&wx, &wh, &bx, &bh}) out.push_back(p);
}

GruStack::GruStack(const std::string& name, int in, int h, int layers, Rng& rng) {
  for (int k = 0; k < layers; ++k) cells.emplace_back(name + "." + std::to_string(k), k == 0 ? in : h, h, rng);
}

std::vector<Var> GruStack::operator()(Tape& t, Var x, const std::vector<Var>& state) {
  if (state.size() != cells.size()) throw std::invalid_argument("GRU state depth mismatch");
  std::vector<Var> next;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    x = cells[k](t, x, state[k]);
    next.push_back(x);
  }
  return next;
}

void GruStack::collect(std::vector<Parameter*>& out) {
  for (auto& c : cells) c.collect(out);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * p.grad;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= cfg_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + cfg_.eps);
    p.zero_grad();
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (auto* p : params) p->grad *= max_norm / norm;
  return norm;
}

void polyak_update(const std::vector<Parameter*>& target, const std::vector<Parameter*>& source, double tau) {
  if (target.size() != source.size()) throw std::invalid_argument("polyak_update: parameter count mismatch");
  for (std::size_t k = 0; k < target.size(); ++k)
    target[k]->value = (1.0 - tau) * target[k]->value + tau * source[k]->value;
}

void copy_values(const std::vector<Parameter*>& target, const std::vector<Parameter*>& source) {
  if (target.size() != source.size()) throw std::invalid_argument("copy_values: parameter count mismatch");
  for (std::size_t k = 0; k < target.size(); ++k) target[k]->value = source[k]->value;
}

bool all_finite(const std::vector<Parameter*>& params) {
  for (auto* p : params)
    if (!p->value.allFinite()) return false;
  return true;
}

}  // namespace mapgo::nn
