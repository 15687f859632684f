#include "iboed/sim/model.hpp"

namespace iboed::sim {

FeatureScaling Model::scaling() const {
  FeatureScaling s;
  s.design_center = bounds().center();
  s.design_scale = bounds().half_width();
  s.obs_center = Vector::Zero(obs_dim());
  s.obs_scale = Vector::Ones(obs_dim());
  s.theta_center = Vector::Zero(theta_dim());
  s.theta_scale = Vector::Ones(theta_dim());
  return s;
}

std::unique_ptr<Latent> Model::begin_trajectory(const Vector&, Rng&) const { return nullptr; }

Vector Model::simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                       Latent* latent) const {
  if (theta.size() != theta_dim()) {
    throw DimensionError(name() + ": theta has " + std::to_string(theta.size()) + " entries, expected " +
                         std::to_string(theta_dim()));
  }
  if (design.size() != design_dim()) {
    throw DimensionError(name() + ": design has " + std::to_string(design.size()) + " entries, expected " +
                         std::to_string(design_dim()));
  }
  if (!bounds().contains(design)) {
    clamp_count_.fetch_add(1, std::memory_order_relaxed);
    return do_simulate(theta, bounds().clamp(design), history, rng, latent);
  }
  return do_simulate(theta, design, history, rng, latent);
}

void Model::require_likelihood() const {
  if (!has_likelihood()) throw UnsupportedCapability(name() + " has no analytic likelihood");
}

double Model::log_likelihood_step(const Vector&, const Vector&, const Vector&) const {
  require_likelihood();
  return 0.0;
}

double Model::log_likelihood(const Vector& theta, const History& history) const {
  require_likelihood();
  double total = 0.0;
  for (int t = 0; t < history.length(); ++t) {
    total += log_likelihood_step(theta, history.design(t), history.observation(t));
  }
  return total;
}

Vector Model::log_likelihood_batch(const Matrix& thetas, const History& history) const {
  require_likelihood();
  Vector out(thetas.rows());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) out[i] = log_likelihood(thetas.row(i).transpose(), history);
  return out;
}

ThetaBatch sample_prior(const Model& model, int count, Rng& rng) {
  if (count < 2) throw ContractError("sample_prior: need ground truth plus at least one contrastive sample");
  ThetaBatch batch;
  batch.rows.resize(count, model.theta_dim());
  for (int i = 0; i < count; ++i) batch.rows.row(i) = model.sample_prior(rng).transpose();
  return batch;
}

}  // namespace iboed::sim
