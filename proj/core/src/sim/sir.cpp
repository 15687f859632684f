#include "iboed/sim/models.hpp"

#include <algorithm>
#include <cmath>

namespace iboed::sim {

Sir::Sir(SirConfig cfg) : cfg_(cfg) {
  if (cfg_.population <= 0.0 || cfg_.dt <= 0.0 || cfg_.horizon <= 0.0) {
    throw std::invalid_argument("sir: population, dt and horizon must be positive");
  }
  if (cfg_.initial_infected < 0.0 || cfg_.initial_infected > cfg_.population) {
    throw std::invalid_argument("sir: initial_infected must lie in [0, population]");
  }
  bounds_.lower = Vector::Constant(1, 0.0);
  bounds_.upper = Vector::Constant(1, cfg_.horizon);
}

FeatureScaling Sir::scaling() const {
  FeatureScaling s = Model::scaling();
  s.obs_center.setConstant(0.2 * cfg_.population);
  s.obs_scale.setConstant(0.2 * cfg_.population);
  s.theta_center << std::exp(cfg_.beta_log_mean), std::exp(cfg_.gamma_log_mean);
  s.theta_scale << 0.5 * std::exp(cfg_.beta_log_mean), 0.5 * std::exp(cfg_.gamma_log_mean);
  return s;
}

Vector Sir::sample_prior(Rng& rng) const {
  std::normal_distribution<double> n01;
  Vector theta(2);
  theta[0] = std::exp(cfg_.beta_log_mean + cfg_.beta_log_sd * n01(rng));
  theta[1] = std::exp(cfg_.gamma_log_mean + cfg_.gamma_log_sd * n01(rng));
  return theta;
}

SirPath Sir::simulate_path(const Vector& theta, Rng& rng) const {
  const double beta = theta[0];
  const double gamma = theta[1];
  const double n = cfg_.population;
  const double dt = cfg_.dt;
  const auto steps = static_cast<std::size_t>(std::llround(cfg_.horizon / dt));
  std::normal_distribution<double> n01;

  SirPath path;
  path.susceptible.resize(steps + 1);
  path.infected.resize(steps + 1);
  path.recovered.resize(steps + 1);
  double s = n - cfg_.initial_infected;
  double i = cfg_.initial_infected;
  path.susceptible[0] = s;
  path.infected[0] = i;
  double r = n - s - i;
  path.recovered[0] = r;
  for (std::size_t k = 1; k <= steps; ++k) {
    // Both noise draws happen every step so the stream layout is theta-independent.
    const double z1 = n01(rng);
    const double z2 = n01(rng);
    const double infection_rate = beta * s * i / n;
    const double recovery_rate = gamma * i;
    const double infections =
        std::clamp(infection_rate * dt + std::sqrt(infection_rate * dt) * z1, 0.0, s);
    const double recoveries = std::clamp(recovery_rate * dt + std::sqrt(recovery_rate * dt) * z2, 0.0, i);
    s -= infections;
    i += infections - recoveries;
    r += recoveries;
    path.susceptible[k] = s;
    path.infected[k] = i;
    path.recovered[k] = r;
  }
  return path;
}

std::unique_ptr<Latent> Sir::begin_trajectory(const Vector& theta, Rng& rng) const {
  return std::make_unique<SirPath>(simulate_path(theta, rng));
}

std::size_t Sir::grid_index(double kappa) const {
  const auto steps = static_cast<long long>(std::llround(cfg_.horizon / cfg_.dt));
  return static_cast<std::size_t>(std::clamp(std::llround(kappa / cfg_.dt), 0LL, steps));
}

Vector Sir::do_simulate(const Vector& theta, const Vector& design, const History&, Rng& rng, Latent* latent) const {
  const auto* path = dynamic_cast<const SirPath*>(latent);
  SirPath fresh;
  if (path == nullptr) {
    // No trajectory state supplied: a one-off measurement on a fresh path.
    fresh = simulate_path(theta, rng);
    path = &fresh;
  }
  std::normal_distribution<double> n01;
  const double latent_count = path->infected[grid_index(design[0])];
  const double y = std::clamp(std::round(latent_count + cfg_.obs_noise * n01(rng)), 0.0, cfg_.population);
  return Vector::Constant(1, y);
}

}  // namespace iboed::sim
