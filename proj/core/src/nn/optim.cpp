#include "iboed/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace iboed::nn {

AdamState::AdamState(AdamConfig cfg, const ParameterList& params) : config(cfg) {
  for (const auto& p : params) {
    first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void adam_step(AdamState& state, ParameterList& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols() ||
        state.first_moment[i].rows() != params[i].rows() || state.first_moment[i].cols() != params[i].cols()) {
      throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i].cwiseAbs2();
    params[i].mutable_value().array() -=
        c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  }
}

void adam_step(AdamState& state, ParameterList& params) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(state, params, grads);
}

void soft_update(const ParameterList& target, const ParameterList& source, double tau) {
  if (target.size() != source.size()) throw DimensionError("soft_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].rows() != source[i].rows() || target[i].cols() != source[i].cols()) {
      throw DimensionError("soft_update: shape mismatch at parameter " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor t = target[i];
    if (tau == 1.0) {
      t.mutable_value() = source[i].value();
    } else if (tau != 0.0) {
      t.mutable_value() = (1.0 - tau) * t.value() + tau * source[i].value();
    }
  }
}

double finite_diff_check(const std::function<Tensor()>& loss, const ParameterList& params, double epsilon) {
  zero_grad(params);
  Tensor root = loss();
  const double base = root.item();
  if (loss().item() != base) throw ContractError("finite_diff_check: loss is not deterministic");
  backward(root);

  const double floor = kFiniteDiffFloor * std::max(1.0, std::abs(base));
  double worst = 0.0;
  for (auto p : params) {
    const Matrix analytic = p.grad();
    Matrix& values = p.mutable_value();
    for (Eigen::Index idx = 0; idx < values.size(); ++idx) {
      const double saved = values(idx);
      const auto at = [&](double offset) {
        values(idx) = saved + offset;
        return loss().item();
      };
      const double numeric =
          (8.0 * (at(epsilon) - at(-epsilon)) - (at(2.0 * epsilon) - at(-2.0 * epsilon))) / (12.0 * epsilon);
      values(idx) = saved;
      const double err =
          std::abs(analytic(idx) - numeric) / std::max({std::abs(analytic(idx)), std::abs(numeric), floor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace iboed::nn
