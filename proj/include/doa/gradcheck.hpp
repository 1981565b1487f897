#pragma once
#include <cmath>
#include <vector>

#include "doa/error.hpp"
#include "doa/tensor.hpp"

namespace doa::ad {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool ok(double tol) const { return max_rel_err < tol; }
};

// Compares the tape gradient of a scalar-valued function against central
// finite differences, step h = h_scale * (1 + |x_i|). `build` receives a
// tape and the id of a leaf holding the flattened input and must return a
// scalar node. Relative error is |a - f| / max(1, |a|, |f|).
template <class Builder>
GradCheckResult grad_check(Builder&& build, std::vector<double> x,
                           double h_scale = 1e-6) {
  const std::size_t n = x.size();

  Tape tape;
  const int in = leaf_view(tape, 1, n, x.data());
  const int loss = build(tape, in);
  backward(tape, loss);
  if (!std::isfinite(tape.scalar_value(loss)))
    throw NumericError("grad_check: non-finite loss");
  std::vector<double> analytic(tape.gradient(in).begin(),
                               tape.gradient(in).end());

  auto eval = [&](const std::vector<double>& v) {
    Tape t2;
    const int leaf = leaf_view(t2, 1, n, v.data());
    const double out = t2.scalar_value(build(t2, leaf));
    if (!std::isfinite(out)) throw NumericError("grad_check: non-finite value");
    return out;
  };

  GradCheckResult res;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = h_scale * (1.0 + std::abs(x[i]));
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = eval(x);
    x[i] = x0 - h;
    const double fm = eval(x);
    x[i] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double rel =
        std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace doa::ad
