#include "iboed/sim/models.hpp"

#include <cmath>
#include <numbers>

namespace iboed::sim {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

LocationFinding::LocationFinding(LocationFindingConfig cfg) : cfg_(cfg) {
  if (cfg_.sources < 1 || cfg_.dim < 1) throw std::invalid_argument("location_finding: sources and dim must be >= 1");
  if (cfg_.noise <= 0.0 || cfg_.background <= 0.0 || cfg_.max_signal <= 0.0 || cfg_.bound <= 0.0) {
    throw std::invalid_argument("location_finding: noise, background, max_signal and bound must be positive");
  }
  bounds_.lower = Vector::Constant(cfg_.dim, -cfg_.bound);
  bounds_.upper = Vector::Constant(cfg_.dim, cfg_.bound);
}

FeatureScaling LocationFinding::scaling() const {
  FeatureScaling s = Model::scaling();
  s.obs_scale.setConstant(2.0);
  return s;
}

Vector LocationFinding::sample_prior(Rng& rng) const {
  std::normal_distribution<double> n01;
  Vector theta(theta_dim());
  for (auto& v : theta) v = n01(rng);
  return theta;
}

double LocationFinding::intensity(const Vector& theta, const Vector& design) const {
  double mu = cfg_.background;
  for (int k = 0; k < cfg_.sources; ++k) {
    const double d2 = (theta.segment(k * cfg_.dim, cfg_.dim) - design).squaredNorm();
    mu += cfg_.alpha / (cfg_.max_signal + d2);
  }
  return mu;
}

Vector LocationFinding::do_simulate(const Vector& theta, const Vector& design, const History&, Rng& rng,
                                    Latent*) const {
  std::normal_distribution<double> n01;
  Vector y(1);
  y[0] = std::log(intensity(theta, design)) + cfg_.noise * n01(rng);
  return y;
}

double LocationFinding::log_likelihood_step(const Vector& theta, const Vector& design, const Vector& obs) const {
  const double z = (obs[0] - std::log(intensity(theta, design))) / cfg_.noise;
  return -0.5 * z * z - std::log(cfg_.noise) - kLogSqrt2Pi;
}

Vector LocationFinding::log_likelihood_batch(const Matrix& thetas, const History& history) const {
  const auto n = thetas.rows();
  Vector out = Vector::Zero(n);
  const double norm = -std::log(cfg_.noise) - kLogSqrt2Pi;
  for (int t = 0; t < history.length(); ++t) {
    const auto design = history.design(t);
    const double y = history.observation(t)[0];
    Eigen::ArrayXd mu = Eigen::ArrayXd::Constant(n, cfg_.background);
    for (int k = 0; k < cfg_.sources; ++k) {
      const Matrix diff = thetas.middleCols(k * cfg_.dim, cfg_.dim).rowwise() - design.transpose();
      mu += cfg_.alpha / (cfg_.max_signal + diff.rowwise().squaredNorm().array());
    }
    const Eigen::ArrayXd z = (y - mu.log()) / cfg_.noise;
    out.array() += -0.5 * z.square() + norm;
  }
  return out;
}

// ---------------------------------------------------------------------------

LinearGaussian::LinearGaussian(LinearGaussianConfig cfg) : cfg_(cfg) {
  if (cfg_.prior_var <= 0.0 || cfg_.noise_var <= 0.0 || cfg_.bound <= 0.0) {
    throw std::invalid_argument("linear_gaussian: variances and bound must be positive");
  }
  bounds_.lower = Vector::Constant(1, -cfg_.bound);
  bounds_.upper = Vector::Constant(1, cfg_.bound);
}

FeatureScaling LinearGaussian::scaling() const {
  FeatureScaling s = Model::scaling();
  s.theta_scale.setConstant(std::sqrt(cfg_.prior_var));
  s.obs_scale.setConstant(std::sqrt(cfg_.noise_var + cfg_.bound * cfg_.bound * cfg_.prior_var));
  return s;
}

Vector LinearGaussian::sample_prior(Rng& rng) const {
  std::normal_distribution<double> n01;
  return Vector::Constant(1, std::sqrt(cfg_.prior_var) * n01(rng));
}

Vector LinearGaussian::do_simulate(const Vector& theta, const Vector& design, const History&, Rng& rng,
                                   Latent*) const {
  std::normal_distribution<double> n01;
  return Vector::Constant(1, design[0] * theta[0] + std::sqrt(cfg_.noise_var) * n01(rng));
}

double LinearGaussian::log_likelihood_step(const Vector& theta, const Vector& design, const Vector& obs) const {
  const double r = obs[0] - design[0] * theta[0];
  return -0.5 * r * r / cfg_.noise_var - 0.5 * std::log(2.0 * std::numbers::pi * cfg_.noise_var);
}

Vector LinearGaussian::log_likelihood_batch(const Matrix& thetas, const History& history) const {
  Vector out = Vector::Zero(thetas.rows());
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * cfg_.noise_var);
  for (int t = 0; t < history.length(); ++t) {
    const double xi = history.design(t)[0];
    const double y = history.observation(t)[0];
    out.array() += -0.5 * (y - xi * thetas.col(0).array()).square() / cfg_.noise_var + norm;
  }
  return out;
}

double LinearGaussian::analytic_eig(double design) const {
  return 0.5 * std::log1p(design * design * cfg_.prior_var / cfg_.noise_var);
}

double LinearGaussian::analytic_eig(const std::vector<double>& designs) const {
  double s = 0.0;
  for (double xi : designs) s += xi * xi;
  return 0.5 * std::log1p(s * cfg_.prior_var / cfg_.noise_var);
}

std::pair<double, double> LinearGaussian::posterior(const History& history) const {
  double precision = 1.0 / cfg_.prior_var;
  double weighted = 0.0;
  for (int t = 0; t < history.length(); ++t) {
    const double xi = history.design(t)[0];
    precision += xi * xi / cfg_.noise_var;
    weighted += xi * history.observation(t)[0] / cfg_.noise_var;
  }
  return {weighted / precision, 1.0 / precision};
}

}  // namespace iboed::sim
