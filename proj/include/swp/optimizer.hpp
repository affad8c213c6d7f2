#pragma once

#include <vector>

#include "swp/autodiff.hpp"

namespace swp {

// SGD with momentum. Update convention:
//   v <- mu*v + g + lambda*w
//   w <- w - lr*v
// i.e. weight decay is folded into the gradient before the velocity update.
template <typename T>
struct OptimState {
  double lr = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::vector<Tensor<T>> velocity;

  void init(const std::vector<Param<T>*>& params) {
    velocity.clear();
    velocity.reserve(params.size());
    for (const Param<T>* p : params) velocity.emplace_back(p->value.shape);
  }
};

template <typename T>
void sgd_momentum_step(const std::vector<Param<T>*>& params, OptimState<T>& st) {
  require(st.velocity.size() == params.size(), ErrorKind::Shape,
          "optimizer state does not match parameter list");
  const T lr = static_cast<T>(st.lr);
  const T mu = static_cast<T>(st.momentum);
  const T wd = static_cast<T>(st.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    Tensor<T>& v = st.velocity[i];
    require(v.shape == p.value.shape, ErrorKind::Shape,
            "velocity shape mismatch for parameter " + p.name);
    require(p.grad.shape == p.value.shape, ErrorKind::Shape,
            "gradient shape mismatch for parameter " + p.name);
    T* vd = v.ptr();
    T* wv = p.value.ptr();
    const T* gd = p.grad.ptr();
    const std::size_t n = v.numel();
    for (std::size_t j = 0; j < n; ++j) {
      vd[j] = mu * vd[j] + gd[j] + wd * wv[j];
      wv[j] -= lr * vd[j];
    }
  }
}

}  // namespace swp
