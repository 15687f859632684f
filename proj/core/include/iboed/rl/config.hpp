#pragma once

#include "iboed/critic/critic_net.hpp"
#include "iboed/est/bounds.hpp"
#include "iboed/est/rewards.hpp"

#include <cstdint>
#include <vector>

namespace iboed::rl {

struct TrainerConfig {
  // TD3
  double learning_rate = 3e-4;
  int batch_size = 256;
  std::vector<int> hidden{256, 256};
  int updates_per_timestep = 10;
  int policy_update_frequency = 2;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  double exploration_noise = 0.1;
  double gamma = 0.99;
  double tau = 0.005;
  int replay_capacity = 1'000'000;

  // Rollouts
  int parallel_envs = 256;
  int horizon = 10;
  int num_contrastive = 255;
  std::int64_t initial_random_timesteps = 10'000;
  std::int64_t total_timesteps = 300'000;
  est::RewardKind reward = est::RewardKind::Dense;

  // Critic
  critic::CriticConfig critic;
  double critic_learning_rate = 3e-4;
  double critic_tau = 0.005;
  int critic_updates_per_iteration = 50;
  int critic_batch_size = 32;

  // Evaluation (0 disables)
  std::int64_t eval_every = 2'000;
  int eval_rollouts = 256;
  int eval_contrastive = 4095;
  est::BoundKind eval_bound = est::BoundKind::Spce;

  std::uint64_t seed = 0;
  bool record_wall_clock = true;

  // Throws std::invalid_argument naming the offending key.
  void validate() const;

  friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

}  // namespace iboed::rl
