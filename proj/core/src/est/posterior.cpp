#include "iboed/est/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace iboed::est {

Vector normalize_log_weights(const Vector& log_weights) {
  if (log_weights.size() == 0) throw ContractError("normalize_log_weights: empty input");
  const double m = log_weights.maxCoeff();
  if (!std::isfinite(m)) throw NumericError("posterior weights: maximum log-weight is " + std::to_string(m));
  for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
    if (std::isnan(log_weights[i])) throw NumericError("posterior weights: NaN log-weight at index " + std::to_string(i));
  }
  Vector w = (log_weights.array() - m).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("posterior weights underflowed");
  return w / total;
}

WeightedSamples posterior_estimate(const History& history, const Critic& critic, const sim::Model& prior,
                                   int grid_size, Rng& rng) {
  if (grid_size < 1) throw ContractError("posterior grid size must be >= 1, got " + std::to_string(grid_size));
  WeightedSamples out;
  out.thetas.resize(grid_size, prior.theta_dim());
  for (int i = 0; i < grid_size; ++i) out.thetas.row(i) = prior.sample_prior(rng).transpose();
  out.weights = normalize_log_weights(critic.scores(history, out.thetas));
  return out;
}

Vector WeightedSamples::mean() const { return thetas.transpose() * weights; }

Vector WeightedSamples::quantile(double q) const {
  Vector out(thetas.cols());
  std::vector<Eigen::Index> order(thetas.rows());
  for (Eigen::Index d = 0; d < thetas.cols(); ++d) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return thetas(a, d) < thetas(b, d); });
    double acc = 0.0;
    out[d] = thetas(order.back(), d);
    for (auto i : order) {
      acc += weights[i];
      if (acc >= q) {
        out[d] = thetas(i, d);
        break;
      }
    }
  }
  return out;
}

double WeightedSamples::effective_sample_size() const { return 1.0 / weights.squaredNorm(); }

}  // namespace iboed::est
