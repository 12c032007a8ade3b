#pragma once

#include <cmath>

#include "ftattack/tensor.hpp"

namespace ftattack {

/// Running averages of squared gradients and squared updates.
struct AdadeltaState {
  Tensor eg2;
  Tensor edx2;

  static AdadeltaState init(const std::vector<int64_t>& shape) {
    AdadeltaState s;
    s.eg2 = Tensor(shape);
    s.edx2 = Tensor(shape);
    return s;
  }
};

/// Eg2 <- rho Eg2 + (1-rho) g^2;  dx = -sqrt(Edx2+eps)/sqrt(Eg2+eps) * g;
/// Edx2 <- rho Edx2 + (1-rho) dx^2;  param <- param + lr * dx.
inline void adadelta_step(Tensor& param, const Tensor& grad, AdadeltaState& state, real rho,
                          real eps, real lr) {
  require_same_shape(param, grad, "adadelta_step");
  require_same_shape(param, state.eg2, "adadelta_step");
  for (int64_t i = 0; i < param.size(); ++i) {
    const real g = grad[i];
    state.eg2[i] = rho * state.eg2[i] + (real(1) - rho) * g * g;
    const real dx = -std::sqrt(state.edx2[i] + eps) / std::sqrt(state.eg2[i] + eps) * g;
    state.edx2[i] = rho * state.edx2[i] + (real(1) - rho) * dx * dx;
    param[i] += lr * dx;
  }
}

struct SgdState {
  Tensor velocity;

  static SgdState init(const std::vector<int64_t>& shape) {
    SgdState s;
    s.velocity = Tensor(shape);
    return s;
  }
};

inline void sgd_step(Tensor& param, const Tensor& grad, SgdState& state, real lr, real momentum) {
  require_same_shape(param, grad, "sgd_step");
  for (int64_t i = 0; i < param.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] - lr * grad[i];
    param[i] += state.velocity[i];
  }
}

}  // namespace ftattack
