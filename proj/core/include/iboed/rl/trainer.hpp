#pragma once

#include "iboed/critic/critic_net.hpp"
#include "iboed/env/replay_buffer.hpp"
#include "iboed/rl/td3.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <vector>

namespace iboed::rl {

// One metrics CSV row. Averages cover the updates since the previous row.
struct MetricsRow {
  std::int64_t step = 0;
  double q_loss = 0.0;
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  double eval_bound = 0.0;
  double eval_stderr = 0.0;
  double wall_clock = 0.0;
};

// A trajectory finished during a rollout phase, with the rewards that were
// stored for it and the target critic that produced them.
struct CompletedTrajectory {
  std::vector<History> histories;  // h_0 .. h_T
  sim::ThetaBatch thetas;
  std::vector<double> rewards;     // r_1 .. r_T
  const critic::CriticNet* reward_critic = nullptr;
};

struct TrainHooks {
  std::function<void(const CompletedTrajectory&)> on_trajectory;
  std::function<void(const MetricsRow&)> on_metrics;
};

// Mean bound of `policy` under the chosen estimator. sPCE/sNMC need the
// model's likelihood; InfoNCE needs a critic.
est::BoundEstimate evaluate_policy(const env::DesignPolicy& policy, const sim::Model& model,
                                   const est::Critic* critic, est::BoundKind kind, int num_contrastive, int horizon,
                                   int num_rollouts, Rng& rng);

// The training loop: parallel rollouts (uniform random designs during the
// initial random phase, then the policy plus exploration noise), rewards from
// the target critic, replay pushes, TD3 updates, then InfoNCE critic updates
// on the rollout just collected, each followed by a soft target-critic sync.
class Trainer {
 public:
  Trainer(const sim::Model& model, TrainerConfig config);

  // Runs iterations until the step budget is spent.
  void run();
  // One rollout/update iteration. The final iteration shrinks to the whole
  // trajectories that still fit, so env_steps() never exceeds the budget.
  // Returns false once not even one trajectory fits.
  bool iterate();
  [[nodiscard]] est::BoundEstimate evaluate(Rng& rng) const;

  [[nodiscard]] const TrainerConfig& config() const { return config_; }
  [[nodiscard]] const sim::Model& model() const { return model_; }
  [[nodiscard]] Td3Agent& agent() { return agent_; }
  [[nodiscard]] const Td3Agent& agent() const { return agent_; }
  [[nodiscard]] critic::CriticNet& critic() { return critic_; }
  [[nodiscard]] const critic::CriticNet& critic() const { return critic_; }
  [[nodiscard]] critic::CriticNet& target_critic() { return target_; }
  [[nodiscard]] const critic::CriticNet& target_critic() const { return target_; }
  [[nodiscard]] nn::AdamState& critic_optimizer() { return critic_opt_; }
  [[nodiscard]] const nn::AdamState& critic_optimizer() const { return critic_opt_; }
  [[nodiscard]] const env::ReplayBuffer& buffer() const { return buffer_; }
  [[nodiscard]] std::int64_t env_steps() const { return env_steps_; }
  [[nodiscard]] std::int64_t iterations() const { return iterations_; }
  [[nodiscard]] Rng& rng() { return rng_; }
  [[nodiscard]] const Rng& rng() const { return rng_; }
  [[nodiscard]] const std::vector<MetricsRow>& metrics() const { return metrics_; }

  void set_hooks(TrainHooks hooks) { hooks_ = std::move(hooks); }
  // Restores counters after loading parameters from a checkpoint.
  void restore_counters(std::int64_t env_steps, std::int64_t iterations, std::int64_t next_trajectory_id);
  [[nodiscard]] std::int64_t next_trajectory_id() const { return next_trajectory_id_; }

 private:
  // Contrastive scores g(h) for every environment, all histories of equal length.
  Vector g_scores(const std::vector<env::TrajectoryState>& states, const std::vector<Matrix>& theta_emb) const;
  void maybe_log(std::int64_t before);

  const sim::Model& model_;
  TrainerConfig config_;
  Rng rng_;
  Td3Agent agent_;
  critic::CriticNet critic_;
  critic::CriticNet target_;
  nn::AdamState critic_opt_;
  env::ReplayBuffer buffer_;
  TrainHooks hooks_;

  std::int64_t env_steps_ = 0;
  std::int64_t iterations_ = 0;
  std::int64_t next_trajectory_id_ = 0;
  std::vector<MetricsRow> metrics_;

  // Running sums since the last metrics row.
  double q_sum_ = 0.0, pi_sum_ = 0.0, critic_sum_ = 0.0;
  std::int64_t q_n_ = 0, pi_n_ = 0, critic_n_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace iboed::rl
