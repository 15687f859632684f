#pragma once

#include "iboed/env/trajectory.hpp"
#include "iboed/est/critic.hpp"

#include <span>
#include <vector>

namespace iboed::est {

using sim::ThetaBatch;

enum class RewardKind { Sparse, Dense };

const char* to_string(RewardKind kind);
RewardKind parse_reward_kind(const std::string& text);

// Contrastive score of a score vector whose entry 0 belongs to theta_0:
//   s_0 - logsumexp(s) + log(L + 1).
// Throws NumericError if any score is non-finite.
double contrastive_score(const Vector& scores);

// g(h, U; L) = log[ exp U(h, theta_0) / ((1/(L+1)) sum_l exp U(h, theta_l)) ],
// with g(h_0) = 0 without consulting the critic.
double g_score(const History& history, const ThetaBatch& thetas, const Critic& critic);

// r_t = g(h_t) - g(h_{t-1}) for t = 1..T given h_0..h_T.
std::vector<double> dense_rewards(std::span<const History> histories, const ThetaBatch& thetas, const Critic& critic);
// Zeros except the last entry, which is g(h_T).
std::vector<double> sparse_rewards(std::span<const History> histories, const ThetaBatch& thetas, const Critic& critic);

// Adapters for env::step. The critic must outlive the returned function.
env::RewardFn make_reward_fn(RewardKind kind, const Critic& critic);

}  // namespace iboed::est
