#pragma once

// Central finite-difference check of Tape gradients against every entry of
// a parameter list.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mapgo/autodiff.hpp"

namespace gradcheck {

using mapgo::ad::Parameter;
using mapgo::ad::Tape;
using mapgo::ad::Var;

struct Report {
  double worst = 0.0;  // largest relative error over parameter tensors
  int checked = 0;
};

/// f builds a scalar on a fresh tape from the given parameters. The
/// relative error of a tensor is |analytic - numeric| / max(|analytic|,
/// |numeric|, floor), measured in the max norm.
inline Report check(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& f,
                    double h = 1e-6, double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(f(t));
  }
  auto eval = [&] {
    Tape t;
    return f(t).scalar();
  };
  Report rep;
  for (auto* p : params) {
    mapgo::ad::Mat num(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = eval();
      x = x0 - h;
      const double fm = eval();
      x = x0;
      num.data()[i] = (fp - fm) / (2 * h);
    }
    const double diff = (num - p->grad).cwiseAbs().maxCoeff();
    const double scale = std::max({num.cwiseAbs().maxCoeff(), p->grad.cwiseAbs().maxCoeff(), floor});
    rep.worst = std::max(rep.worst, diff / scale);
    ++rep.checked;
  }
  return rep;
}

}  // namespace gradcheck
