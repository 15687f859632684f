#pragma once

#include "iboed/env/policy.hpp"
#include "iboed/est/critic.hpp"
#include "iboed/sim/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace iboed::est {

using sim::ThetaBatch;

enum class BoundKind { Spce, Snmc, InfoNce };

const char* to_string(BoundKind kind);
BoundKind parse_bound_kind(const std::string& text);

// Monte-Carlo estimate in nats; std_error = sample std / sqrt(num_rollouts).
struct BoundEstimate {
  BoundKind kind = BoundKind::Spce;
  double value = 0.0;
  double std_error = 0.0;
  int num_contrastive = 0;
  int num_rollouts = 0;
  std::vector<double> per_rollout;
};

BoundEstimate summarize(BoundKind kind, int num_contrastive, std::vector<double> per_rollout);

// A completed trajectory h_T together with its parameter batch theta_{0:L}.
struct Rollout {
  History history;
  ThetaBatch thetas;
};

// Simulates `count` trajectories of length `horizon` under `policy`, each with
// its own L+1 prior draws, advancing `chunk` trajectories in lockstep and
// handing each finished one to `fn`. With more than one worker thread `fn`
// runs concurrently for distinct indices. Memory stays bounded by one chunk.
void for_each_rollout(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                      int count, Rng& rng, const std::function<void(const Rollout&, int index)>& fn, int chunk = 256);
std::vector<Rollout> simulate_rollouts(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive,
                                       int horizon, int count, Rng& rng);

// Per-rollout terms on shared samples.
//   sPCE:    log p(h|theta_0) - log[(1/(L+1)) sum_{l=0..L} p(h|theta_l)]
//   sNMC:    log p(h|theta_0) - log[(1/L) sum_{l=1..L} p(h|theta_l)]
//   InfoNCE: g(h, U; L)
double spce_term(const sim::Model& model, const Rollout& rollout);
double snmc_term(const sim::Model& model, const Rollout& rollout);
std::vector<double> spce_terms(const sim::Model& model, const std::vector<Rollout>& rollouts);
std::vector<double> snmc_terms(const sim::Model& model, const std::vector<Rollout>& rollouts);
std::vector<double> infonce_terms(const Critic& critic, const std::vector<Rollout>& rollouts);

// Throws UnsupportedCapability for models without a likelihood.
BoundEstimate spce_bound(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                         int num_rollouts, Rng& rng);
BoundEstimate snmc_bound(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                         int num_rollouts, Rng& rng);
// sPCE and sNMC on the same rollouts.
struct LikelihoodBounds {
  BoundEstimate spce;
  BoundEstimate snmc;
};
LikelihoodBounds likelihood_bounds(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive,
                                   int horizon, int num_rollouts, Rng& rng);
BoundEstimate infonce_bound(const env::DesignPolicy& policy, const Critic& critic, const sim::Model& model,
                            int num_contrastive, int horizon, int num_rollouts, Rng& rng);

// Nested Monte-Carlo check of I(theta; y_{1:T}) = sum_t I_{h_{t-1}}(xi_t).
// The total uses one inner prior sample set; each marginal t < T uses its own,
// and the last marginal shares the total's set (so T = 1 gives lhs == rhs).
struct DecompositionCheck {
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  double diff = 0.0;
  std::vector<double> marginals;
  std::vector<double> marginal_se;

  [[nodiscard]] double combined_se() const;
};

DecompositionCheck marginal_eig_decomposition_check(const sim::Model& model, const env::DesignPolicy& policy,
                                                    int horizon, int outer_samples, int inner_samples, Rng& rng);

}  // namespace iboed::est
