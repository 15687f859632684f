#include "iboed/sim/models.hpp"

#include <cmath>

namespace iboed::sim {

Cartpole::Cartpole(CartpoleConfig cfg) : cfg_(cfg) {
  if (cfg_.cart_mass <= 0.0 || cfg_.pole_length <= 0.0 || cfg_.substeps < 1 || cfg_.step_duration <= 0.0) {
    throw std::invalid_argument("cartpole: masses, lengths, substeps and step duration must be positive");
  }
  if (cfg_.mu_low < 0.0 || cfg_.mu_high < cfg_.mu_low || cfg_.mass_low <= 0.0 || cfg_.mass_high < cfg_.mass_low) {
    throw std::invalid_argument("cartpole: invalid prior ranges");
  }
  bounds_.lower = Vector::Constant(1, -cfg_.impulse_bound);
  bounds_.upper = Vector::Constant(1, cfg_.impulse_bound);
}

FeatureScaling Cartpole::scaling() const {
  FeatureScaling s = Model::scaling();
  s.theta_center << 0.5 * (cfg_.mu_low + cfg_.mu_high), 0.5 * (cfg_.mass_low + cfg_.mass_high);
  s.theta_scale << 0.5 * (cfg_.mu_high - cfg_.mu_low), 0.5 * (cfg_.mass_high - cfg_.mass_low);
  if (s.theta_scale[0] <= 0.0) s.theta_scale[0] = 1.0;
  if (s.theta_scale[1] <= 0.0) s.theta_scale[1] = 1.0;
  return s;
}

Vector Cartpole::sample_prior(Rng& rng) const {
  std::uniform_real_distribution<double> mu(cfg_.mu_low, cfg_.mu_high);
  std::uniform_real_distribution<double> mass(cfg_.mass_low, cfg_.mass_high);
  Vector theta(2);
  theta[0] = mu(rng);
  theta[1] = mass(rng);
  return theta;
}

CartpoleState Cartpole::initial_state() const {
  CartpoleState s;
  s.angle = cfg_.initial_angle;
  return s;
}

CartpoleState Cartpole::step(const CartpoleState& start, const Vector& theta, double impulse) const {
  const double mu = theta[0];
  const double m = theta[1];
  const double l = cfg_.pole_length;
  const double g = cfg_.gravity;
  const double total = cfg_.cart_mass + m;
  const double dt = cfg_.step_duration / cfg_.substeps;

  // d/dt of (x, x_dot, angle, angle_dot) under a constant horizontal force.
  const auto deriv = [&](const CartpoleState& s, double force) {
    const double sin_a = std::sin(s.angle);
    const double cos_a = std::cos(s.angle);
    const double temp = (force + m * l * s.angle_dot * s.angle_dot * sin_a) / total;
    const double angle_acc = (g * sin_a - cos_a * temp - mu * s.angle_dot / (m * l)) /
                             (l * (4.0 / 3.0 - m * cos_a * cos_a / total));
    const double x_acc = temp - m * l * angle_acc * cos_a / total;
    return CartpoleState{s.x_dot, x_acc, s.angle_dot, angle_acc};
  };
  const auto axpy = [](const CartpoleState& s, double h, const CartpoleState& d) {
    return CartpoleState{s.x + h * d.x, s.x_dot + h * d.x_dot, s.angle + h * d.angle, s.angle_dot + h * d.angle_dot};
  };

  // Classical RK4; the impulse is spread over the first substep.
  CartpoleState s = start;
  for (int k = 0; k < cfg_.substeps; ++k) {
    const double force = k == 0 ? impulse / dt : 0.0;
    const auto k1 = deriv(s, force);
    const auto k2 = deriv(axpy(s, 0.5 * dt, k1), force);
    const auto k3 = deriv(axpy(s, 0.5 * dt, k2), force);
    const auto k4 = deriv(axpy(s, dt, k3), force);
    s.x += dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    s.x_dot += dt / 6.0 * (k1.x_dot + 2.0 * k2.x_dot + 2.0 * k3.x_dot + k4.x_dot);
    s.angle += dt / 6.0 * (k1.angle + 2.0 * k2.angle + 2.0 * k3.angle + k4.angle);
    s.angle_dot += dt / 6.0 * (k1.angle_dot + 2.0 * k2.angle_dot + 2.0 * k3.angle_dot + k4.angle_dot);
  }
  return s;
}

double Cartpole::energy(const CartpoleState& s, const Vector& theta) const {
  const double m = theta[1];
  const double l = cfg_.pole_length;
  const double total = cfg_.cart_mass + m;
  const double kinetic = 0.5 * total * s.x_dot * s.x_dot + m * l * s.x_dot * s.angle_dot * std::cos(s.angle) +
                         0.5 * (4.0 / 3.0) * m * l * l * s.angle_dot * s.angle_dot;
  return kinetic + m * cfg_.gravity * l * std::cos(s.angle);
}

Vector Cartpole::do_simulate(const Vector& theta, const Vector& design, const History& history, Rng&,
                             Latent*) const {
  // The physical state is a deterministic function of theta and the applied
  // impulses, so it is rebuilt from the history rather than carried around.
  CartpoleState s = initial_state();
  for (int t = 0; t < history.length(); ++t) s = step(s, theta, bounds_.clamp(history.design(t))[0]);
  s = step(s, theta, design[0]);
  Vector y(3);
  y << s.x, s.x_dot, s.angle;
  return y;
}

}  // namespace iboed::sim
