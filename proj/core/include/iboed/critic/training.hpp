#pragma once

#include "iboed/critic/critic_net.hpp"
#include "iboed/est/bounds.hpp"
#include "iboed/nn/optim.hpp"

#include <span>

namespace iboed::critic {

// Mean InfoNCE objective over every trajectory b and prefix t = 1..n:
//   U(h_t^b, theta_0^b) - logsumexp_l U(h_t^b, theta_l^b) + log(L + 1),
// each trajectory contrasted against its own stored theta batch. All rollouts
// must share one history length and one L. Differentiable in the critic.
nn::Tensor infonce_objective(const CriticNet& critic, std::span<const est::Rollout> batch);

// One Adam ascent step on infonce_objective; returns the objective value
// before the step. Throws ContractError for fewer than two trajectories and
// NumericError if the objective is not finite.
double train_critic_batch(CriticNet& critic, nn::AdamState& optimizer, std::span<const est::Rollout> batch);

}  // namespace iboed::critic
