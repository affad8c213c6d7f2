#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "swp/autodiff.hpp"

namespace swp {

// Central-difference gradient check, double precision. `make_loss` must be a
// pure function of the parameter values: called with a tape it returns the
// scalar loss var; called with nullptr it only needs the forward value.
// Returns max over parameter elements of
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
inline double grad_check(const std::vector<Param<double>*>& params,
                         const std::function<VarPtr<double>(Tape<double>*)>& make_loss,
                         double eps) {
  require(eps > 0.0, ErrorKind::Shape, "grad_check: eps must be positive");
  for (Param<double>* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = make_loss(&tape);
    backward_scalar(tape, *loss);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (Param<double>* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>& p = *params[pi];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double saved = p.value.data[j];
      p.value.data[j] = saved + eps;
      double lp = loss_value(make_loss(nullptr));
      p.value.data[j] = saved - eps;
      double lm = loss_value(make_loss(nullptr));
      p.value.data[j] = saved;
      const double cd = (lp - lm) / (2.0 * eps);
      const double an = analytic[pi].data[j];
      const double rel = std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace swp
