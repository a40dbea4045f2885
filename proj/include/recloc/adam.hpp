// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "recloc/errors.hpp"

namespace recloc {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

// One Adam update with bias correction. The weight-decay term lambda*theta is
// added to the gradient before the moment update. When `mask` is non-empty,
// entries with mask 0 are left untouched (frozen).
inline void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                      const Eigen::VectorXd& mask = Eigen::VectorXd()) {
  if (grads.size() != params.size()) throw InputError("adam_step: gradient size mismatch");
  if (mask.size() != 0 && mask.size() != params.size()) {
    throw InputError("adam_step: mask size mismatch");
  }
  if (!grads.allFinite()) {
    throw DivergenceError("adam_step: non-finite gradient", NAN);
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask.size() != 0 && mask[i] == 0.0) continue;
    const double g = grads[i] + state.weight_decay * params[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace recloc
