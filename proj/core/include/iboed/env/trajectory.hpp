#pragma once

#include "iboed/env/history.hpp"
#include "iboed/env/policy.hpp"
#include "iboed/sim/model.hpp"

#include <cstdint>
#include <functional>
#include <memory>

namespace iboed::env {

using sim::ThetaBatch;

// Reward for the transition prev -> next given the trajectory's parameter batch.
using RewardFn = std::function<double(const History& prev, const History& next, const ThetaBatch& thetas)>;

// Hidden POMDP state (h_t, theta_{0:L}) plus any simulator latent state.
// Every random draw of a trajectory is a function of (seed, step index), so
// the outcome of a step depends only on the current state and the design.
// Only `history` is ever shown to a policy or Q network.
struct TrajectoryState {
  History history;
  ThetaBatch thetas;
  std::unique_ptr<sim::Latent> latent;
  std::uint64_t trajectory_id = 0;
  std::uint64_t seed = 0;
  bool done = false;

  // Rebuilds a state at an arbitrary history with the latent derived from
  // `seed` exactly as reset() would. Used to check the Markov property.
  static TrajectoryState at(const sim::Model& model, const History& history, ThetaBatch thetas, std::uint64_t seed,
                            std::uint64_t trajectory_id = 0);
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  Vector observation;
};

// Fresh trajectory with an empty history of capacity `horizon` and L+1 prior draws.
// All trajectory randomness derives from `seed`.
TrajectoryState reset(const sim::Model& model, int num_contrastive, int horizon, std::uint64_t seed,
                      std::uint64_t trajectory_id = 0);
TrajectoryState reset(const sim::Model& model, int num_contrastive, int horizon, Rng& rng,
                      std::uint64_t trajectory_id = 0);

// Simulates y under theta_0, appends (design, y) and scores the transition.
// Throws ContractError when the trajectory is already done.
StepResult step(TrajectoryState& state, const Vector& design, const sim::Model& model, const RewardFn& reward);

// Runs `policy` for `horizon` steps with the ground truth fixed to theta0.
History rollout_at(const sim::Model& model, const DesignPolicy& policy, const Vector& theta0, int horizon,
                   std::uint64_t seed, Rng& policy_rng);

}  // namespace iboed::env
