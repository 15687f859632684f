#pragma once

#include "iboed/env/history.hpp"

#include <functional>

namespace iboed::est {

// A critic U(h, theta) scoring how well a parameter explains a history.
class Critic {
 public:
  virtual ~Critic() = default;
  // U(h, theta_i) for every row theta_i of `thetas`.
  [[nodiscard]] virtual Vector scores(const History& history, const Matrix& thetas) const = 0;
  [[nodiscard]] double score(const History& history, const Vector& theta) const;
};

// U(h, theta) = c for all inputs.
class ConstantCritic final : public Critic {
 public:
  explicit ConstantCritic(double value = 0.0) : value_(value) {}
  [[nodiscard]] Vector scores(const History&, const Matrix& thetas) const override {
    return Vector::Constant(thetas.rows(), value_);
  }

 private:
  double value_;
};

// Wraps an arbitrary scoring function.
class FunctionCritic final : public Critic {
 public:
  using Fn = std::function<double(const History&, const Vector&)>;
  explicit FunctionCritic(Fn fn) : fn_(std::move(fn)) {}
  [[nodiscard]] Vector scores(const History& history, const Matrix& thetas) const override;

 private:
  Fn fn_;
};

}  // namespace iboed::est
