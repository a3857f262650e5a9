#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "skelctx/tensor.hpp"

namespace skelctx {

// Max over elements of |analytic - central difference| / (|central difference| + 1e-8).
// The function is re-evaluated from scratch for every probe, so it must be pure
// in the probed tensors.
inline double check_gradient_multi(const std::function<Tensor()>& f,
                                   std::vector<Tensor> wrt, double h) {
  if (!(h >= 1e-6 && h <= 1e-4))
    throw std::invalid_argument("check_gradient: h must lie in [1e-6, 1e-4]");
  for (Tensor& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor out = f();
  if (out.numel() != 1) throw std::invalid_argument("check_gradient: f must be scalar");
  if (!std::isfinite(out.value()))
    throw std::runtime_error("check_gradient: non-finite function value");
  out.backward();

  double worst = 0.0;
  for (Tensor& t : wrt) {
    t.ensure_grad();
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double fp = f().value();
      t.data()[i] = saved - h;
      const double fm = f().value();
      t.data()[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("check_gradient: non-finite probe value");
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
      worst = std::max(worst, err);
    }
    t.zero_grad();
  }
  return worst;
}

inline double check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                             double h) {
  return check_gradient_multi([&]() { return f(x); }, {x}, h);
}

}  // namespace skelctx
