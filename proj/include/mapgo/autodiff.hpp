#pragma once

// Reverse-mode differentiation over row-major dense matrices. A Tape records
// every operation of one forward pass; backward() walks it in reverse and
// accumulates into the Parameter gradients it touched. Only the operators
// the encoder, actor and critic need are provided.

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace mapgo::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::vector<int>;
using IndexPtr = std::shared_ptr<const Index>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  /// A non-recording tape treats parameters as constants and stores no
  /// backward closures (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Mat v);
  /// Leaf bound to p; one leaf per parameter per tape. Frozen parameters
  /// enter as constants.
  Var param(Parameter& p);
  void freeze(const std::vector<Parameter*>& params) { frozen_.insert(params.begin(), params.end()); }
  Var push(Mat value, bool requires_grad, Backward back);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  /// grad(id) += g (allocating on first use); no-op for constants.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward back;
    Parameter* param = nullptr;
  };
  bool record_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> leaves_;
  std::unordered_set<Parameter*> frozen_;
};

inline const Mat& Var::value() const { return tape->value(id); }

// Arithmetic. add/sub broadcast a 1 x c right operand over rows.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Each row i of a scaled by s(i, 0).
Var mul_rows(Var a, Var s);

// Elementwise functions.
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var abs(Var a);
/// Clamped value; zero gradient where the clamp is active.
Var clamp(Var a, double lo, double hi);
/// Clamped value; identity gradient (straight-through).
Var clamp_st(Var a, double lo, double hi);
Var minimum(Var a, Var b);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// r x c -> r x 1.
Var row_sum(Var a);

// Shape and routing.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int start, int count);
Var slice_rows(Var a, int start, int count);
/// Row-major reshape.
Var reshape(Var a, int rows, int cols);
Var gather_rows(Var a, IndexPtr idx);
/// out(j) = mean of rows i with idx[i] = j; zero when no row maps to j.
Var scatter_mean_rows(Var a, IndexPtr idx, int n_out);
/// out(i) = reshape(w(i mod E), dout x din) * h(i) per row i, E = rows of w.
/// Rows of h beyond E reuse the weights cyclically.
Var edge_matvec(Var w, Var h, int dout);
/// out(i, 0) = a(i, col[i]).
Var pick_cols(Var a, IndexPtr col);

// Categorical helpers over masked rows (mask entries 0 are excluded; their
// outputs are 0 and receive no gradient). Each row needs one unmasked entry.
Var masked_log_softmax(Var logits, const Mat& mask);
Var masked_softmax(Var logits, const Mat& mask);
/// Value of `hard`, gradient of `soft`.
Var straight_through(Var soft, const Mat& hard);
Var stop_gradient(Var a);

}  // namespace mapgo::ad
