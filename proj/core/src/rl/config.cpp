#include "iboed/rl/config.hpp"

#include <stdexcept>
#include <string>

namespace iboed::rl {

namespace {

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(key) + ": " + what);
}

}  // namespace

void TrainerConfig::validate() const {
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(batch_size > 0, "batch_size", "must be > 0");
  require(!hidden.empty(), "hidden", "needs at least one hidden layer");
  for (int h : hidden) require(h > 0, "hidden", "widths must be > 0");
  require(updates_per_timestep > 0, "updates_per_timestep", "must be > 0");
  require(policy_update_frequency > 0, "policy_update_frequency", "must be > 0");
  require(policy_noise >= 0.0, "policy_noise", "must be >= 0");
  require(noise_clip >= 0.0, "noise_clip", "must be >= 0");
  require(exploration_noise >= 0.0, "exploration_noise", "must be >= 0");
  require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1], got " + std::to_string(gamma));
  require(tau >= 0.0 && tau <= 1.0, "tau", "must lie in [0, 1]");
  require(replay_capacity > 0, "replay_capacity", "must be > 0");
  require(parallel_envs > 0, "parallel_envs", "must be > 0");
  require(horizon > 0, "horizon", "must be > 0");
  require(num_contrastive >= 1, "num_contrastive", "must be >= 1");
  require(initial_random_timesteps >= 0, "initial_random_timesteps", "must be >= 0");
  require(total_timesteps > 0, "total_timesteps", "must be > 0");
  require(critic.embed_dim > 0, "critic.embed_dim", "must be > 0");
  require(critic.lstm_hidden > 0, "critic.lstm_hidden", "must be > 0");
  require(critic_learning_rate > 0.0, "critic_learning_rate", "must be > 0");
  require(critic_tau >= 0.0 && critic_tau <= 1.0, "critic_tau", "must lie in [0, 1]");
  require(critic_updates_per_iteration >= 0, "critic_updates_per_iteration", "must be >= 0");
  require(critic_batch_size >= 2, "critic_batch_size", "must be >= 2");
  require(eval_every >= 0, "eval_every", "must be >= 0");
  require(eval_rollouts >= 2, "eval_rollouts", "must be >= 2");
  require(eval_contrastive >= 1, "eval_contrastive", "must be >= 1");
}

}  // namespace iboed::rl
