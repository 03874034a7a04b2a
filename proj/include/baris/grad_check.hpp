#pragma once

#include <functional>

#include "baris/ops.hpp"

namespace baris {

// Central-difference gradient verification. f must be a deterministic scalar
// function of x expressed through tape ops. Returns the maximum relative
// error over all coordinates, with denominator max(|analytic|, |numeric|, 1e-12).
inline double grad_check(
    const std::function<Var<double>(Tape<double>&, const Var<double>&)>& f,
    const Tensor<double>& x, double eps = 1e-5) {
  Var<double> xv = make_param(x, true);
  {
    Tape<double> tape;
    Var<double> loss = f(tape, xv);
    tape.backward(loss);
  }
  double max_rel = 0.0;
  Tensor<double> xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double h = eps * (1.0 + std::abs(x[i]));
    const double orig = xp[i];
    auto eval = [&](double v) {
      xp[i] = v;
      Tape<double> tape;
      Var<double> xc = make_constant(xp);
      xc.requires_grad = true;  // keep the same op graph shape as the analytic pass
      xc.grad = std::make_shared<Tensor<double>>(Tensor<double>::zeros(xp.shape));
      Var<double> loss = f(tape, xc);
      return loss.val()[0];
    };
    const double fp = eval(orig + h);
    const double fm = eval(orig - h);
    xp[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = (*xv.grad)[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
  }
  return max_rel;
}

}  // namespace baris
