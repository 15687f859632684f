#pragma once

#include "iboed/rl/config.hpp"
#include "iboed/sim/models.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iboed::io {

struct EstimatorConfig {
  est::BoundKind bound = est::BoundKind::Spce;
  int num_contrastive = 4095;
  int rollouts = 256;

  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

// Everything a run needs. Seed and reward kind live in `trainer`.
struct RunConfig {
  std::string model = "location_finding";
  sim::ModelOptions model_options;
  rl::TrainerConfig trainer;
  EstimatorConfig estimator;
  std::string output_dir = "runs/default";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Invalid configuration text or values. `line` is 0 when unknown.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& source, int line, std::string key, const std::string& message);
  [[nodiscard]] int line() const { return line_; }
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

// Defaults for a registered model: horizon 10 (cartpole 5, linear_gaussian 1),
// 10 TD3 updates per timestep for location_finding and 8 otherwise, and the
// InfoNCE bound for models without a likelihood.
RunConfig default_config(const std::string& model);

// Sectioned key = value text:
//
//   seed = 3
//   reward = "dense"          # or "sparse"
//   output_dir = "runs/lf"
//   [model]      name = "location_finding", plus model options
//   [trainer]    TD3, rollout and evaluation settings
//   [critic]     encoder, widths, learning_rate, tau, updates_per_iteration, batch_size
//   [estimator]  bound, num_contrastive, rollouts
//
// Values are numbers, booleans, "strings" or [number lists]; '#' starts a
// comment. Unknown sections or keys, duplicates and invalid values throw
// ConfigError naming the line and key.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical text listing every key; parse_config(to_toml(c)) == c.
std::string to_toml(const RunConfig& config);

// Throws ConfigError for out-of-range values, including seeds above 2^53 - 1.
void validate(const RunConfig& config);

// 64-bit FNV-1a of the canonical text, as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes);
std::string config_hash(const RunConfig& config);

}  // namespace iboed::io
