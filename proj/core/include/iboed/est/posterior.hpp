#pragma once

#include "iboed/est/critic.hpp"
#include "iboed/sim/model.hpp"

namespace iboed::est {

// Prior draws (one per row) with self-normalized weights w_i ∝ exp U(h, theta_i).
struct WeightedSamples {
  Matrix thetas;
  Vector weights;

  [[nodiscard]] Vector mean() const;
  // Per-dimension weighted quantile, q in [0, 1].
  [[nodiscard]] Vector quantile(double q) const;
  [[nodiscard]] double effective_sample_size() const;
};

// Throws ContractError for grid_size < 1, NumericError if the scores are not finite.
WeightedSamples posterior_estimate(const History& history, const Critic& critic, const sim::Model& prior,
                                   int grid_size, Rng& rng);

// Normalizes log-weights in log space; throws NumericError when nothing is finite.
Vector normalize_log_weights(const Vector& log_weights);

}  // namespace iboed::est
