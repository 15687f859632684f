#pragma once

#include "iboed/est/critic.hpp"
#include "iboed/nn/layers.hpp"
#include "iboed/sim/model.hpp"

#include <atomic>
#include <functional>
#include <optional>
#include <span>
#include <string>

namespace iboed::critic {

enum class HistoryEncoder { Auto, Attention, Lstm };

const char* to_string(HistoryEncoder kind);
HistoryEncoder parse_history_encoder(const std::string& text);

struct CriticConfig {
  // Auto picks attention pooling for conditionally independent models, an LSTM otherwise.
  HistoryEncoder encoder = HistoryEncoder::Auto;
  int embed_dim = 32;
  std::vector<int> pair_hidden{64, 64};
  std::vector<int> attention_hidden{32};
  int lstm_hidden = 64;
  std::vector<int> theta_hidden{64, 64};

  friend bool operator==(const CriticConfig&, const CriticConfig&) = default;
};

// Separable critic U(h, theta) = <E_h(h), E_theta(theta)>.
//
// E_h is either n * sum_i softmax(a)_i e_i over per-pair embeddings
// (permutation invariant) or a linear read-out of an LSTM's final state.
// E_theta is an MLP. Inputs are affinely rescaled by the model's
// FeatureScaling before entering either encoder.
class CriticNet final : public est::Critic {
 public:
  CriticNet(const sim::Model& model, CriticConfig config, Rng& rng);

  CriticNet(CriticNet&&) noexcept;
  CriticNet& operator=(CriticNet&&) noexcept;
  CriticNet(const CriticNet&) = delete;
  CriticNet& operator=(const CriticNet&) = delete;

  [[nodiscard]] CriticNet clone() const;

  // No graph is recorded; counted by inference_calls().
  [[nodiscard]] Vector scores(const History& history, const Matrix& thetas) const override;
  // E_h for histories of equal length, one row each (no graph).
  [[nodiscard]] Matrix embed_histories(std::span<const History> histories) const;
  // E_theta for each row of `thetas` (no graph).
  [[nodiscard]] Matrix embed_thetas(const Matrix& thetas) const;

  // Differentiable encoders. All histories must share one length n;
  // encode_prefixes returns n tensors, element t encoding the first t+1 pairs.
  [[nodiscard]] nn::Tensor encode_histories(std::span<const History> histories) const;
  [[nodiscard]] std::vector<nn::Tensor> encode_prefixes(std::span<const History> histories) const;
  [[nodiscard]] nn::Tensor encode_thetas(const Matrix& thetas) const;

  [[nodiscard]] nn::ParameterList parameters() const;
  [[nodiscard]] HistoryEncoder encoder_kind() const { return kind_; }
  [[nodiscard]] const CriticConfig& config() const { return config_; }
  [[nodiscard]] int embed_dim() const { return config_.embed_dim; }

  [[nodiscard]] nn::Mlp& theta_encoder() { return theta_net_; }
  [[nodiscard]] std::uint64_t inference_calls() const { return calls_->load(std::memory_order_relaxed); }

 private:
  CriticNet(const CriticNet& other, int /*clone tag*/);
  [[nodiscard]] std::vector<nn::Tensor> pair_inputs(std::span<const History> histories) const;
  [[nodiscard]] nn::Tensor encode_empty(Eigen::Index batch) const;
  void count_call() const { calls_->fetch_add(1, std::memory_order_relaxed); }

  CriticConfig config_;
  HistoryEncoder kind_;
  int design_dim_, obs_dim_, theta_dim_;
  sim::FeatureScaling scaling_;
  std::optional<nn::AttentionPool> pool_;
  std::optional<nn::Lstm> lstm_;
  std::optional<nn::Mlp> lstm_head_;
  nn::Mlp theta_net_;
  std::unique_ptr<std::atomic<std::uint64_t>> calls_;
};

// target <- (1 - tau) target + tau critic over all critic parameters.
void target_sync(const CriticNet& critic, CriticNet& target, double tau);

// U*(h, theta) = log p(h | theta) + c(h); needs an analytic likelihood.
class OptimalCritic final : public est::Critic {
 public:
  using HistoryFn = std::function<double(const History&)>;
  explicit OptimalCritic(const sim::Model& model, HistoryFn c = nullptr);
  [[nodiscard]] Vector scores(const History& history, const Matrix& thetas) const override;

 private:
  const sim::Model& model_;
  HistoryFn c_;
};

}  // namespace iboed::critic
