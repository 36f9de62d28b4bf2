#include <random>

#include "doctest.h"
#include "mapgo/autodiff.hpp"
#include "../support/gradcheck.hpp"

using namespace mapgo::ad;

namespace {

Mat random_mat(std::mt19937_64& rng, int r, int c, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("tape gradients match finite differences for every operator") {
  for (int seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    Parameter a("a", random_mat(rng, 4, 3)), b("b", random_mat(rng, 3, 5)), bias("bias", random_mat(rng, 1, 5));
    Parameter s("s", random_mat(rng, 4, 1)), w("w", random_mat(rng, 4, 6)), c("c", random_mat(rng, 4, 5));
    auto idx = std::make_shared<const Index>(Index{2, 0, 0, 3, 1, 2});
    auto tgt = std::make_shared<const Index>(Index{0, 1, 1, 2, 2, 2});
    auto col = std::make_shared<const Index>(Index{4, 0, 2, 1});
    Mat mask = Mat::Ones(4, 5);
    mask(0, 1) = mask(2, 4) = mask(3, 0) = 0;

    auto f = [&](Tape& t) {
      Var x = add(matmul(t.param(a), t.param(b)), t.param(bias));  // 4x5
      Var y = mul_rows(tanh(x), t.param(s));
      Var z = sub(sigmoid(y), scale(t.param(c), 0.3));
      Var u = concat_cols({z, softplus(x), exp(scale(z, 0.2))});     // 4x15
      Var v = concat_rows({slice_cols(u, 2, 6), square(slice_cols(u, 8, 6))});  // 8x6
      v = reshape(slice_rows(v, 1, 6), 9, 4);
      Var g = gather_rows(t.param(a), idx);                          // 6x3
      Var sm = scatter_mean_rows(g, tgt, 4);                         // 4x3
      Var em = edge_matvec(t.param(w), slice_cols(sm, 0, 3), 2);     // 4x2
      Var ls = masked_log_softmax(x, mask);
      Var ps = masked_softmax(y, mask);
      Var pk = pick_cols(ls, col);
      Var mn = minimum(slice_cols(u, 0, 2), em);
      Var lg = log(add_scalar(square(t.param(s)), 1.0));
      Var r = add(add(mean(v), sum(mul(ps, t.param(c)))), sum(pk));
      r = add(r, sum(row_sum(mn)));
      r = add(r, sum(mul(abs(em), abs(em))));
      r = add(r, mean(lg));
      r = add(r, sum(clamp(x, -10.0, 10.0)));
      return r;
    };
    const auto rep = gradcheck::check({&a, &b, &bias, &s, &w, &c}, f);
    CHECK(rep.checked == 6);
    CHECK(rep.worst < 1e-6);
  }
}

TEST_CASE("clamp variants and straight-through routing") {
  Parameter p("p", Mat{{-2.0, 0.5, 3.0}});
  p.zero_grad();
  Tape t;
  t.backward(sum(clamp(t.param(p), -1.0, 1.0)));
  CHECK(p.grad(0, 0) == 0.0);
  CHECK(p.grad(0, 1) == 1.0);
  CHECK(p.grad(0, 2) == 0.0);

  p.zero_grad();
  Tape t2;
  Var st = clamp_st(t2.param(p), -1.0, 1.0);
  CHECK(st.value()(0, 2) == 1.0);
  t2.backward(sum(st));
  CHECK(p.grad(0, 0) == 1.0);

  p.zero_grad();
  Tape t3;
  Var soft = scale(t3.param(p), 2.0);
  Var hard = straight_through(soft, Mat{{0.0, 1.0, 0.0}});
  CHECK(hard.value()(0, 1) == 1.0);
  t3.backward(sum(hard));
  CHECK(p.grad(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("masked categorical helpers") {
  Tape t;
  Mat mask{{1, 0, 1}};
  Var x = t.constant(Mat{{0.3, 50.0, -0.2}});
  Var p = masked_softmax(x, mask);
  CHECK(p.value()(0, 1) == 0.0);
  CHECK(p.value().sum() == doctest::Approx(1.0));
  Var lp = masked_log_softmax(x, mask);
  CHECK(std::exp(lp.value()(0, 0)) == doctest::Approx(p.value()(0, 0)));
  CHECK_THROWS(masked_softmax(x, Mat{{0, 0, 0}}));
}

TEST_CASE("parameters get one leaf per tape and constants take no gradient") {
  Parameter p("p", Mat{{1.5}});
  p.zero_grad();
  Tape t;
  Var a = t.param(p), b = t.param(p);
  CHECK(a.id == b.id);
  t.backward(mul(a, b));
  CHECK(p.grad(0, 0) == doctest::Approx(3.0));
  Tape t2;
  Var c = t2.constant(Mat{{2.0}});
  t2.backward(square(stop_gradient(c)));  // no-op, nothing requires grad
  CHECK_FALSE(t2.has_grad(c.id));
}

TEST_CASE("edge_matvec reuses weight rows cyclically") {
  std::mt19937_64 rng(11);
  Parameter w("w", random_mat(rng, 2, 6)), h("h", random_mat(rng, 4, 3));
  {
    Tape t;
    const Mat out = edge_matvec(t.param(w), t.param(h), 2).value();
    for (int i = 0; i < 4; ++i) {
      const Mat wi = Eigen::Map<const Mat>(w.value.row(i % 2).data(), 2, 3);
      CHECK((out.row(i) - (wi * h.value.row(i).transpose()).transpose()).norm() < 1e-14);
    }
  }
  const auto r = gradcheck::check({&w, &h}, [&](Tape& t) { return sum(square(edge_matvec(t.param(w), t.param(h), 2))); });
  CHECK(r.worst < 1e-6);
}
