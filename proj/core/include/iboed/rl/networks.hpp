#pragma once

#include "iboed/env/policy.hpp"
#include "iboed/nn/layers.hpp"
#include "iboed/sim/model.hpp"

#include <span>

namespace iboed::rl {

// Fixed per-slot rescaling of encode_history_concat output: design and
// observation slots are divided by the model's feature scales so zero padding
// stays zero. Contains no parameter information.
class InputScaler {
 public:
  InputScaler() = default;
  InputScaler(const sim::Model& model, int horizon);

  [[nodiscard]] Matrix encode(std::span<const History> histories) const;
  [[nodiscard]] Vector encode(const History& history) const;
  [[nodiscard]] Matrix scale_designs(const Matrix& designs) const;
  [[nodiscard]] int encoded_dim() const { return static_cast<int>(history_scale_.size()); }
  [[nodiscard]] int design_dim() const { return static_cast<int>(design_center_.size()); }

 private:
  Vector history_scale_;
  RowVector design_center_, design_inv_half_;
};

// pi(h) = center + half_width * tanh(MLP(encode(h))).
class PolicyNet {
 public:
  PolicyNet(const sim::Model& model, int horizon, const std::vector<int>& hidden, Rng& rng);

  PolicyNet(PolicyNet&&) noexcept = default;
  PolicyNet& operator=(PolicyNet&&) noexcept = default;
  [[nodiscard]] PolicyNet clone() const;

  // `encoded` holds one scaled encoding per row.
  [[nodiscard]] nn::Tensor forward(const nn::Tensor& encoded) const;
  [[nodiscard]] Matrix predict(const Matrix& encoded) const;
  [[nodiscard]] Vector act(const History& history) const;

  [[nodiscard]] nn::ParameterList parameters() const { return net_.parameters(); }
  [[nodiscard]] const InputScaler& scaler() const { return scaler_; }
  [[nodiscard]] const sim::DesignBounds& bounds() const { return bounds_; }
  [[nodiscard]] nn::Mlp& net() { return net_; }

 private:
  PolicyNet(InputScaler scaler, sim::DesignBounds bounds, nn::Mlp net)
      : scaler_(std::move(scaler)), bounds_(std::move(bounds)), net_(std::move(net)) {}

  InputScaler scaler_;
  sim::DesignBounds bounds_;
  nn::Mlp net_;
};

// Two independent Q(h, xi) networks over [scaled encoding, scaled design].
class TwinQ {
 public:
  TwinQ(const sim::Model& model, int horizon, const std::vector<int>& hidden, Rng& rng);

  TwinQ(TwinQ&&) noexcept = default;
  TwinQ& operator=(TwinQ&&) noexcept = default;
  [[nodiscard]] TwinQ clone() const;

  // `designs` in raw units; returns batch x 1.
  [[nodiscard]] nn::Tensor q1(const nn::Tensor& encoded, const nn::Tensor& designs) const;
  [[nodiscard]] nn::Tensor q2(const nn::Tensor& encoded, const nn::Tensor& designs) const;

  [[nodiscard]] nn::ParameterList parameters() const;
  [[nodiscard]] nn::Mlp& net1() { return q1_; }
  [[nodiscard]] nn::Mlp& net2() { return q2_; }

 private:
  TwinQ(RowVector center, RowVector inv_half, nn::Mlp a, nn::Mlp b)
      : design_center_(std::move(center)), design_inv_half_(std::move(inv_half)), q1_(std::move(a)), q2_(std::move(b)) {}
  [[nodiscard]] nn::Tensor input(const nn::Tensor& encoded, const nn::Tensor& designs) const;

  RowVector design_center_, design_inv_half_;
  nn::Mlp q1_;
  nn::Mlp q2_;
};

// Noise-free deterministic policy adapter.
class NetworkPolicy final : public env::DesignPolicy {
 public:
  explicit NetworkPolicy(const PolicyNet& net) : net_(net) {}
  [[nodiscard]] Vector act(const History& history, Rng& rng) const override;
  [[nodiscard]] Matrix act_batch(std::span<const History> histories, Rng& rng) const override;

 private:
  const PolicyNet& net_;
};

// Uniform over the design box, ignoring the history.
class RandomPolicy final : public env::DesignPolicy {
 public:
  explicit RandomPolicy(sim::DesignBounds bounds) : bounds_(std::move(bounds)) {}
  [[nodiscard]] Vector act(const History& history, Rng& rng) const override;

 private:
  sim::DesignBounds bounds_;
};

// pi(h) + N(0, noise^2) per coordinate, clamped to the design box.
Vector select_action(const PolicyNet& policy, const History& history, double noise, Rng& rng);
Matrix select_actions(const PolicyNet& policy, std::span<const History> histories, double noise, Rng& rng);

}  // namespace iboed::rl
