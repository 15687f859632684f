#include "iboed/sim/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace iboed::sim {

namespace {

struct Binder {
  const ModelOptions& options;
  std::string model;
  std::size_t used = 0;

  void bind(const char* key, double& field) {
    if (auto it = options.find(key); it != options.end()) {
      field = it->second;
      ++used;
    }
  }
  void bind(const char* key, int& field) {
    if (auto it = options.find(key); it != options.end()) {
      if (it->second != std::floor(it->second)) {
        throw std::invalid_argument(model + "." + key + " must be an integer");
      }
      field = static_cast<int>(it->second);
      ++used;
    }
  }
  void finish(const std::vector<std::string>& keys) const {
    if (used == options.size()) return;
    for (const auto& [k, v] : options) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        throw std::invalid_argument("unknown option '" + k + "' for model " + model);
      }
    }
  }
};

}  // namespace

std::vector<std::string> registered_models() { return {"location_finding", "sir", "cartpole", "linear_gaussian"}; }

std::vector<std::string> model_option_keys(const std::string& name) {
  if (name == "location_finding") return {"sources", "dim", "background", "max_signal", "alpha", "noise", "bound"};
  if (name == "linear_gaussian") return {"prior_var", "noise_var", "bound"};
  if (name == "sir") {
    return {"population", "initial_infected", "dt", "horizon", "beta_log_mean",
            "beta_log_sd", "gamma_log_mean", "gamma_log_sd", "obs_noise"};
  }
  if (name == "cartpole") {
    return {"cart_mass", "pole_length", "gravity", "step_duration", "substeps", "impulse_bound",
            "mu_low",    "mu_high",     "mass_low", "mass_high",    "initial_angle"};
  }
  throw std::invalid_argument("unknown model '" + name + "'");
}

std::unique_ptr<Model> make_model(const std::string& name, const ModelOptions& options) {
  const auto keys = model_option_keys(name);
  Binder b{options, name};
  if (name == "location_finding") {
    LocationFindingConfig c;
    b.bind("sources", c.sources);
    b.bind("dim", c.dim);
    b.bind("background", c.background);
    b.bind("max_signal", c.max_signal);
    b.bind("alpha", c.alpha);
    b.bind("noise", c.noise);
    b.bind("bound", c.bound);
    b.finish(keys);
    return std::make_unique<LocationFinding>(c);
  }
  if (name == "linear_gaussian") {
    LinearGaussianConfig c;
    b.bind("prior_var", c.prior_var);
    b.bind("noise_var", c.noise_var);
    b.bind("bound", c.bound);
    b.finish(keys);
    return std::make_unique<LinearGaussian>(c);
  }
  if (name == "sir") {
    SirConfig c;
    b.bind("population", c.population);
    b.bind("initial_infected", c.initial_infected);
    b.bind("dt", c.dt);
    b.bind("horizon", c.horizon);
    b.bind("beta_log_mean", c.beta_log_mean);
    b.bind("beta_log_sd", c.beta_log_sd);
    b.bind("gamma_log_mean", c.gamma_log_mean);
    b.bind("gamma_log_sd", c.gamma_log_sd);
    b.bind("obs_noise", c.obs_noise);
    b.finish(keys);
    return std::make_unique<Sir>(c);
  }
  CartpoleConfig c;
  b.bind("cart_mass", c.cart_mass);
  b.bind("pole_length", c.pole_length);
  b.bind("gravity", c.gravity);
  b.bind("step_duration", c.step_duration);
  b.bind("substeps", c.substeps);
  b.bind("impulse_bound", c.impulse_bound);
  b.bind("mu_low", c.mu_low);
  b.bind("mu_high", c.mu_high);
  b.bind("mass_low", c.mass_low);
  b.bind("mass_high", c.mass_high);
  b.bind("initial_angle", c.initial_angle);
  b.finish(keys);
  return std::make_unique<Cartpole>(c);
}

}  // namespace iboed::sim
