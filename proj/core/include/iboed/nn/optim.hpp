#pragma once

#include "iboed/nn/layers.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace iboed::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, const ParameterList& params);
};

// One bias-corrected Adam update of `params` from `grads` (aligned with params).
void adam_step(AdamState& state, ParameterList& params, const std::vector<Matrix>& grads);
// Same, reading each parameter's accumulated gradient.
void adam_step(AdamState& state, ParameterList& params);

// target <- (1 - tau) * target + tau * source, elementwise.
void soft_update(const ParameterList& target, const ParameterList& source, double tau);

inline constexpr double kFiniteDiffFloor = 1e-6;

// max over parameter entries of |a - n| / max(|a|, |n|, kFiniteDiffFloor * max(1, |loss|))
// with a the autodiff gradient and n the fourth-order central difference
//   [8 (f(p+e) - f(p-e)) - (f(p+2e) - f(p-2e))] / 12e.
// `loss` must rebuild the graph from the current parameter values on each call.
double finite_diff_check(const std::function<Tensor()>& loss, const ParameterList& params, double epsilon = 1e-5);

}  // namespace iboed::nn
