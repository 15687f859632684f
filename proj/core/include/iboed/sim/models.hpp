#pragma once

#include "iboed/sim/model.hpp"

#include <map>
#include <string>
#include <vector>

namespace iboed::sim {

// K point sources in R^N. Total intensity at xi is
//   mu(theta, xi) = b + sum_k alpha / (m + |theta_k - xi|^2)
// and the observation is log y ~ N(log mu, sigma^2). Prior theta ~ N(0, I).
struct LocationFindingConfig {
  int sources = 2;
  int dim = 2;
  double background = 0.1;
  double max_signal = 1e-4;
  double alpha = 1.0;
  double noise = 0.5;
  double bound = 4.0;
};

class LocationFinding final : public Model {
 public:
  explicit LocationFinding(LocationFindingConfig cfg = {});

  [[nodiscard]] std::string name() const override { return "location_finding"; }
  [[nodiscard]] int design_dim() const override { return cfg_.dim; }
  [[nodiscard]] int obs_dim() const override { return 1; }
  [[nodiscard]] int theta_dim() const override { return cfg_.sources * cfg_.dim; }
  [[nodiscard]] const DesignBounds& bounds() const override { return bounds_; }
  [[nodiscard]] bool conditionally_independent() const override { return true; }
  [[nodiscard]] FeatureScaling scaling() const override;

  [[nodiscard]] Vector sample_prior(Rng& rng) const override;
  [[nodiscard]] bool has_likelihood() const override { return true; }
  [[nodiscard]] double log_likelihood_step(const Vector& theta, const Vector& design, const Vector& obs) const override;
  [[nodiscard]] Vector log_likelihood_batch(const Matrix& thetas, const History& history) const override;

  [[nodiscard]] double intensity(const Vector& theta, const Vector& design) const;
  [[nodiscard]] const LocationFindingConfig& config() const { return cfg_; }

 protected:
  [[nodiscard]] Vector do_simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                                   Latent* latent) const override;

 private:
  LocationFindingConfig cfg_;
  DesignBounds bounds_;
};

// theta ~ N(0, prior_var), y = xi * theta + N(0, noise_var). Analytic
// likelihood, posterior and information gain; used as a test oracle.
struct LinearGaussianConfig {
  double prior_var = 1.0;
  double noise_var = 1.0;
  double bound = 5.0;
};

class LinearGaussian final : public Model {
 public:
  explicit LinearGaussian(LinearGaussianConfig cfg = {});

  [[nodiscard]] std::string name() const override { return "linear_gaussian"; }
  [[nodiscard]] int design_dim() const override { return 1; }
  [[nodiscard]] int obs_dim() const override { return 1; }
  [[nodiscard]] int theta_dim() const override { return 1; }
  [[nodiscard]] const DesignBounds& bounds() const override { return bounds_; }
  [[nodiscard]] bool conditionally_independent() const override { return true; }
  [[nodiscard]] FeatureScaling scaling() const override;

  [[nodiscard]] Vector sample_prior(Rng& rng) const override;
  [[nodiscard]] bool has_likelihood() const override { return true; }
  [[nodiscard]] double log_likelihood_step(const Vector& theta, const Vector& design, const Vector& obs) const override;
  [[nodiscard]] Vector log_likelihood_batch(const Matrix& thetas, const History& history) const override;

  // 0.5 * log(1 + xi^2 * prior_var / noise_var)
  [[nodiscard]] double analytic_eig(double design) const;
  // Information gain of a fixed design sequence, 0.5 * log(1 + sum xi^2 * prior_var / noise_var).
  [[nodiscard]] double analytic_eig(const std::vector<double>& designs) const;
  // Conjugate posterior (mean, variance) of theta given the history.
  [[nodiscard]] std::pair<double, double> posterior(const History& history) const;
  [[nodiscard]] const LinearGaussianConfig& config() const { return cfg_; }

 protected:
  [[nodiscard]] Vector do_simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                                   Latent* latent) const override;

 private:
  LinearGaussianConfig cfg_;
  DesignBounds bounds_;
};

// Stochastic SIR epidemic integrated by Euler-Maruyama on a fixed grid. The
// latent path is drawn once per trajectory, so repeated measurements share it
// (experiments are not conditionally independent). theta = (beta, gamma),
// design = measurement time kappa, observation = noisy infected count.
struct SirConfig {
  double population = 500.0;
  double initial_infected = 2.0;
  double dt = 0.1;
  double horizon = 100.0;
  double beta_log_mean = -0.6931471805599453;  // log 0.5
  double beta_log_sd = 0.5;
  double gamma_log_mean = -2.302585092994046;  // log 0.1
  double gamma_log_sd = 0.5;
  double obs_noise = 1.0;
};

struct SirPath final : Latent {
  std::vector<double> susceptible;
  std::vector<double> infected;
  std::vector<double> recovered;
};

class Sir final : public Model {
 public:
  explicit Sir(SirConfig cfg = {});

  [[nodiscard]] std::string name() const override { return "sir"; }
  [[nodiscard]] int design_dim() const override { return 1; }
  [[nodiscard]] int obs_dim() const override { return 1; }
  [[nodiscard]] int theta_dim() const override { return 2; }
  [[nodiscard]] const DesignBounds& bounds() const override { return bounds_; }
  [[nodiscard]] bool conditionally_independent() const override { return false; }
  [[nodiscard]] FeatureScaling scaling() const override;

  [[nodiscard]] Vector sample_prior(Rng& rng) const override;
  [[nodiscard]] std::unique_ptr<Latent> begin_trajectory(const Vector& theta, Rng& rng) const override;

  [[nodiscard]] SirPath simulate_path(const Vector& theta, Rng& rng) const;
  [[nodiscard]] std::size_t grid_index(double kappa) const;
  [[nodiscard]] const SirConfig& config() const { return cfg_; }

 protected:
  [[nodiscard]] Vector do_simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                                   Latent* latent) const override;

 private:
  SirConfig cfg_;
  DesignBounds bounds_;
};

// Cart-pole with viscous joint friction. theta = (mu, pole mass). Each
// experiment applies an impulse to the cart, integrates one step of
// step_duration seconds and observes (cart position, cart velocity, pole
// angle). The physical state carries over between experiments, so the
// observation depends on the whole design history.
struct CartpoleConfig {
  double cart_mass = 1.0;
  double pole_length = 0.5;  // pivot to pole centre of mass
  double gravity = 9.81;
  double step_duration = 1.0 / 6.0;
  int substeps = 60;
  double impulse_bound = 3.0;
  double mu_low = 0.0, mu_high = 0.2;
  double mass_low = 0.5, mass_high = 1.5;
  double initial_angle = 0.1;
};

struct CartpoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double angle = 0.0;
  double angle_dot = 0.0;
};

class Cartpole final : public Model {
 public:
  explicit Cartpole(CartpoleConfig cfg = {});

  [[nodiscard]] std::string name() const override { return "cartpole"; }
  [[nodiscard]] int design_dim() const override { return 1; }
  [[nodiscard]] int obs_dim() const override { return 3; }
  [[nodiscard]] int theta_dim() const override { return 2; }
  [[nodiscard]] const DesignBounds& bounds() const override { return bounds_; }
  [[nodiscard]] bool conditionally_independent() const override { return false; }
  [[nodiscard]] FeatureScaling scaling() const override;

  [[nodiscard]] Vector sample_prior(Rng& rng) const override;

  [[nodiscard]] CartpoleState initial_state() const;
  // Applies `impulse` (N*s) over the first substep, then integrates one full step.
  [[nodiscard]] CartpoleState step(const CartpoleState& s, const Vector& theta, double impulse) const;
  // Mechanical energy (cart + pole) relative to the pivot height.
  [[nodiscard]] double energy(const CartpoleState& s, const Vector& theta) const;
  [[nodiscard]] const CartpoleConfig& config() const { return cfg_; }

 protected:
  [[nodiscard]] Vector do_simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                                   Latent* latent) const override;

 private:
  CartpoleConfig cfg_;
  DesignBounds bounds_;
};

// Named numeric overrides from a config block, e.g. {"dim": 5}.
using ModelOptions = std::map<std::string, double>;

// Registered names: location_finding, sir, cartpole, linear_gaussian.
// Unknown names or option keys throw std::invalid_argument.
std::unique_ptr<Model> make_model(const std::string& name, const ModelOptions& options = {});
std::vector<std::string> model_option_keys(const std::string& name);
std::vector<std::string> registered_models();

}  // namespace iboed::sim
