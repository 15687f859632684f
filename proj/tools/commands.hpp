#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace iboed::cli {

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kUsage = 2, kNumericAbort = 3 };

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::int64_t> total_timesteps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> reward;
  bool resume = false;
  bool quiet = false;
};

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  bool random = false;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> model;  // with --random and no config
  bool force = false;
  std::optional<std::string> bound;
  std::optional<int> num_contrastive;
  std::optional<int> rollouts;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
};

struct PosteriorOptions {
  std::filesystem::path checkpoint;
  std::optional<std::vector<double>> theta0;
  std::optional<std::uint64_t> seed;
  int grid_size = 10000;
  std::optional<std::filesystem::path> output;
};

struct DiagOptions {
  bool grad_check = false;
  bool invariants = false;
  std::optional<std::string> inject_fault;  // autodiff op name, e.g. "tanh"
  std::uint64_t seed = 7;
};

struct SimulateOptions {
  std::string model = "location_finding";
  std::optional<std::filesystem::path> config;
  std::optional<std::vector<double>> theta;
  std::optional<std::vector<double>> design;  // fixed design for every step; random otherwise
  int trajectories = 1;
  std::optional<int> horizon;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
};

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_posterior(const PosteriorOptions& options, std::ostream& out, std::ostream& err);
int cmd_diag(const DiagOptions& options, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

// Parses argv and dispatches; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace iboed::cli
