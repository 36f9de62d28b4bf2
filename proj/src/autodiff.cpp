#include "mapgo/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mapgo::ad {

Var Tape::constant(Mat v) {
  nodes_.push_back({std::move(v), {}, false, {}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  if (!record_ || frozen_.contains(&p)) return constant(p.value);
  if (auto it = leaves_.find(&p); it != leaves_.end()) return {this, it->second};
  nodes_.push_back({p.value, {}, true, {}, &p});
  const int id = static_cast<int>(nodes_.size()) - 1;
  leaves_.emplace(&p, id);
  return {this, id};
}

Var Tape::push(Mat value, bool requires_grad, Backward back) {
  nodes_.push_back({std::move(value), {}, requires_grad, requires_grad ? std::move(back) : Backward{}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("variable from another tape");
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward needs a scalar root");
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad = Mat::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.back) {
      n.back(*this, i);
    }
  }
}

namespace {

Tape* tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("variables from different tapes");
  return a.tape;
}

bool any_grad(Tape* t, std::initializer_list<int> ids) {
  for (int id : ids)
    if (t->requires_grad(id)) return true;
  return false;
}

void check_same(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

bool row_broadcast(Var a, Var b) { return b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols(); }

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape* t = a.tape;
  Mat v = a.value().unaryExpr(f);
  const int ia = a.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia, df](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    const Mat& y = tp.value(self);
    Mat g(x.rows(), x.cols());
    const Mat& gs = tp.grad(self);
    for (Eigen::Index i = 0; i < x.size(); ++i) g.data()[i] = gs.data()[i] * df(x.data()[i], y.data()[i]);
    tp.accumulate(ia, g);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape* t = tape_of(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Mat v(a.rows(), b.cols());
  v.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return t->push(std::move(v), any_grad(t, {ia, ib}), [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const bool bc = row_broadcast(a, b);
  if (!bc) check_same(a, b, "add");
  Mat v = bc ? Mat(a.value().rowwise() + b.value().row(0)) : Mat(a.value() + b.value());
  const int ia = a.id, ib = b.id;
  return t->push(std::move(v), any_grad(t, {ia, ib}), [ia, ib, bc](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) {
      if (bc) tp.accumulate(ib, g.colwise().sum());
      else tp.accumulate(ib, g);
    }
  });
}

Var sub(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const bool bc = row_broadcast(a, b);
  if (!bc) check_same(a, b, "sub");
  Mat v = bc ? Mat(a.value().rowwise() - b.value().row(0)) : Mat(a.value() - b.value());
  const int ia = a.id, ib = b.id;
  return t->push(std::move(v), any_grad(t, {ia, ib}), [ia, ib, bc](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) {
      if (bc) tp.accumulate(ib, -g.colwise().sum());
      else tp.accumulate(ib, -g);
    }
  });
}

Var mul(Var a, Var b) {
  Tape* t = tape_of(a, b);
  check_same(a, b, "mul");
  Mat v = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return t->push(std::move(v), any_grad(t, {ia, ib}), [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape* t = a.tape;
  const int ia = a.id;
  return t->push(a.value() * s, t->requires_grad(ia),
                 [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  Tape* t = a.tape;
  const int ia = a.id;
  return t->push(a.value().array() + s, t->requires_grad(ia),
                 [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var mul_rows(Var a, Var s) {
  Tape* t = tape_of(a, s);
  if (s.cols() != 1 || s.rows() != a.rows()) throw std::invalid_argument("mul_rows: shape mismatch");
  Mat v = s.value().col(0).asDiagonal() * a.value();
  const int ia = a.id, is = s.id;
  return t->push(std::move(v), any_grad(t, {ia, is}), [ia, is](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, tp.value(is).col(0).asDiagonal() * g);
    if (tp.requires_grad(is)) tp.accumulate(is, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); }, [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var clamp_st(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); }, [](double, double) { return 1.0; });
}

Var minimum(Var a, Var b) {
  Tape* t = tape_of(a, b);
  check_same(a, b, "minimum");
  Mat v = a.value().cwiseMin(b.value());
  const int ia = a.id, ib = b.id;
  return t->push(std::move(v), any_grad(t, {ia, ib}), [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& x = tp.value(ia);
    const Mat& y = tp.value(ib);
    Mat ga = Mat::Zero(g.rows(), g.cols()), gb = Mat::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i)
      (x.data()[i] <= y.data()[i] ? ga : gb).data()[i] = g.data()[i];
    tp.accumulate(ia, ga);
    tp.accumulate(ib, gb);
  });
}

Var sum(Var a) {
  Tape* t = a.tape;
  const int ia = a.id;
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return t->push(std::move(v), t->requires_grad(ia), [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, Mat::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var a) {
  Tape* t = a.tape;
  const int ia = a.id;
  return t->push(a.value().rowwise().sum(), t->requires_grad(ia), [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, tp.grad(self).col(0).replicate(1, x.cols()));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape* t = parts.front().tape;
  const Eigen::Index r = parts.front().rows();
  Eigen::Index c = 0;
  std::vector<int> ids, offs;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    ids.push_back(p.id);
    offs.push_back(static_cast<int>(c));
    c += p.cols();
    rg = rg || t->requires_grad(p.id);
  }
  Mat v(r, c);
  for (std::size_t k = 0; k < parts.size(); ++k) v.middleCols(offs[k], parts[k].cols()) = parts[k].value();
  return t->push(std::move(v), rg, [ids, offs](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(offs[k], tp.value(ids[k]).cols()));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape* t = parts.front().tape;
  const Eigen::Index c = parts.front().cols();
  Eigen::Index r = 0;
  std::vector<int> ids, offs;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    ids.push_back(p.id);
    offs.push_back(static_cast<int>(r));
    r += p.rows();
    rg = rg || t->requires_grad(p.id);
  }
  Mat v(r, c);
  for (std::size_t k = 0; k < parts.size(); ++k) v.middleRows(offs[k], parts[k].rows()) = parts[k].value();
  return t->push(std::move(v), rg, [ids, offs](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleRows(offs[k], tp.value(ids[k]).rows()));
  });
}

Var slice_cols(Var a, int start, int count) {
  Tape* t = a.tape;
  if (start < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  const int ia = a.id;
  return t->push(a.value().middleCols(start, count), t->requires_grad(ia), [ia, start, count](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = Mat::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var slice_rows(Var a, int start, int count) {
  Tape* t = a.tape;
  if (start < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  const int ia = a.id;
  return t->push(a.value().middleRows(start, count), t->requires_grad(ia), [ia, start, count](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = Mat::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var reshape(Var a, int rows, int cols) {
  Tape* t = a.tape;
  if (static_cast<Eigen::Index>(rows) * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  const int ia = a.id;
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return t->push(std::move(v), t->requires_grad(ia), [ia, r0, c0](Tape& tp, int self) {
    tp.accumulate(ia, Eigen::Map<const Mat>(tp.grad(self).data(), r0, c0));
  });
}

Var gather_rows(Var a, IndexPtr idx) {
  Tape* t = a.tape;
  const Mat& x = a.value();
  Mat v(static_cast<Eigen::Index>(idx->size()), x.cols());
  for (std::size_t i = 0; i < idx->size(); ++i) v.row(i) = x.row((*idx)[i]);
  const int ia = a.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia, idx](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    const Mat& g = tp.grad(self);
    Mat out = Mat::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) out.row((*idx)[i]) += g.row(i);
    tp.accumulate(ia, out);
  });
}

Var scatter_mean_rows(Var a, IndexPtr idx, int n_out) {
  Tape* t = a.tape;
  const Mat& x = a.value();
  if (static_cast<Eigen::Index>(idx->size()) != x.rows()) throw std::invalid_argument("scatter_mean_rows: size mismatch");
  auto inv = std::make_shared<std::vector<double>>(n_out, 0.0);
  for (int j : *idx) (*inv)[j] += 1.0;
  for (double& c : *inv) c = c > 0 ? 1.0 / c : 0.0;
  Mat v = Mat::Zero(n_out, x.cols());
  // Rows are summed in index order, so the result does not depend on how the
  // caller interleaves targets.
  for (std::size_t i = 0; i < idx->size(); ++i) v.row((*idx)[i]) += x.row(i);
  for (int j = 0; j < n_out; ++j) v.row(j) *= (*inv)[j];
  const int ia = a.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia, idx, inv](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    Mat out(static_cast<Eigen::Index>(idx->size()), g.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) out.row(i) = g.row((*idx)[i]) * (*inv)[(*idx)[i]];
    tp.accumulate(ia, out);
  });
}

Var edge_matvec(Var w, Var h, int dout) {
  Tape* t = tape_of(w, h);
  const Eigen::Index e = w.rows(), n = h.rows(), din = h.cols();
  if (e == 0 || n % e != 0 || w.cols() != dout * din) throw std::invalid_argument("edge_matvec: shape mismatch");
  Mat v(n, dout);
  const Mat& wv = w.value();
  const Mat& hv = h.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* wi = wv.row(i % e).data();
    const double* hi = hv.row(i).data();
    for (int o = 0; o < dout; ++o) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < din; ++k) acc += wi[o * din + k] * hi[k];
      v(i, o) = acc;
    }
  }
  const int iw = w.id, ih = h.id;
  return t->push(std::move(v), any_grad(t, {iw, ih}), [iw, ih, dout](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& wv = tp.value(iw);
    const Mat& hv = tp.value(ih);
    const Eigen::Index e = wv.rows(), n = hv.rows(), din = hv.cols();
    if (tp.requires_grad(iw)) {
      Mat gw = Mat::Zero(e, dout * din);
      for (Eigen::Index i = 0; i < n; ++i) {
        double* gi = gw.row(i % e).data();
        const double* hi = hv.row(i).data();
        for (int o = 0; o < dout; ++o) {
          const double go = g(i, o);
          for (Eigen::Index k = 0; k < din; ++k) gi[o * din + k] += go * hi[k];
        }
      }
      tp.accumulate(iw, gw);
    }
    if (tp.requires_grad(ih)) {
      Mat gh = Mat::Zero(n, din);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double* wi = wv.row(i % e).data();
        for (int o = 0; o < dout; ++o) {
          const double go = g(i, o);
          for (Eigen::Index k = 0; k < din; ++k) gh(i, k) += go * wi[o * din + k];
        }
      }
      tp.accumulate(ih, gh);
    }
  });
}

Var pick_cols(Var a, IndexPtr col) {
  Tape* t = a.tape;
  const Mat& x = a.value();
  if (static_cast<Eigen::Index>(col->size()) != x.rows()) throw std::invalid_argument("pick_cols: size mismatch");
  Mat v(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) v(i, 0) = x(i, (*col)[i]);
  const int ia = a.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia, col](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) g(i, (*col)[i]) = tp.grad(self)(i, 0);
    tp.accumulate(ia, g);
  });
}

Var masked_log_softmax(Var logits, const Mat& mask) {
  Tape* t = logits.tape;
  const Mat& x = logits.value();
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw std::invalid_argument("masked_log_softmax: mask shape");
  Mat v = Mat::Zero(x.rows(), x.cols());
  auto probs = std::make_shared<Mat>(Mat::Zero(x.rows(), x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_log_softmax: row fully masked");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0) z += std::exp(x(i, j) - mx);
    const double lz = mx + std::log(z);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0) {
        v(i, j) = x(i, j) - lz;
        (*probs)(i, j) = std::exp(v(i, j));
      }
  }
  const int ia = logits.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia, probs, mask](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    Mat gm = g.cwiseProduct(mask);
    Mat out = gm - probs->cwiseProduct(gm.rowwise().sum().replicate(1, gm.cols()));
    tp.accumulate(ia, out.cwiseProduct(mask));
  });
}

Var masked_softmax(Var logits, const Mat& mask) {
  Tape* t = logits.tape;
  const Mat& x = logits.value();
  Mat v = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax: row fully masked");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0) z += (v(i, j) = std::exp(x(i, j) - mx));
    v.row(i) /= z;
  }
  const int ia = logits.id;
  return t->push(std::move(v), t->requires_grad(ia), [ia](Tape& tp, int self) {
    const Mat& y = tp.value(self);
    const Mat& g = tp.grad(self);
    const Mat dot = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(ia, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var straight_through(Var soft, const Mat& hard) {
  Tape* t = soft.tape;
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) throw std::invalid_argument("straight_through: shape");
  const int ia = soft.id;
  return t->push(hard, t->requires_grad(ia), [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

}  // namespace mapgo::ad
