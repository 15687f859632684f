#pragma once

#include "iboed/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace iboed::diag {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // the measured statistic
  double threshold = 0.0;  // what it was compared against
  double seconds = 0.0;
  std::string detail;
};

// "PASS name  value=... threshold=... (1.2 s) detail"
std::string format_result(const CheckResult& result);

struct GradCheckOptions {
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  double epsilon = 1e-5;
};

// mlp, lstm, attention_pool, critic_infonce_attention, critic_infonce_lstm,
// td3_q_loss, td3_policy_loss. Each builds a small random instance (biases
// randomized too, so no ReLU sits exactly at its kink) and compares autodiff
// gradients with finite differences.
std::vector<std::string> gradient_check_names();
CheckResult gradient_check(const std::string& name, const GradCheckOptions& options = {});
std::vector<CheckResult> gradient_checks(const GradCheckOptions& options = {});

// Dense rewards of random trajectories under random critics sum to g(h_T);
// sparse totals equal dense totals.
CheckResult telescoping_check(int trajectories, std::uint64_t seed, double tolerance = 1e-9);

// LinearGaussian, T = 1, design 1: mean sPCE <= EIG + 3 se and mean sNMC >= EIG - 3 se
// on shared samples; also verifies per rollout that sNMC >= sPCE exactly when
// p(h|theta_0) is at least the mean contrastive likelihood.
CheckResult sandwich_check(int num_contrastive, int rollouts, std::uint64_t seed);

// Location finding: InfoNCE with the optimal critic log p(h|theta) + c(h)
// equals sPCE per rollout, for c = 0 and a history-dependent c.
CheckResult optimal_critic_check(int num_contrastive, int rollouts, std::uint64_t seed, double tolerance = 1e-9);

// Every bound is at most log(L + 1), L = 1.
CheckResult cap_check(int rollouts, std::uint64_t seed);

// LinearGaussian, T = 2: total EIG equals the sum of marginals within 3 combined se.
CheckResult decomposition_check(int outer, int inner, std::uint64_t seed);

// LinearGaussian, T = 2, optimal critic: per-step mean dense reward matches
// the nested Monte-Carlo marginal EIG within 3 combined se.
CheckResult dense_marginal_check(int num_contrastive, int rollouts, int outer, int inner, std::uint64_t seed);

struct InvariantOptions {
  std::uint64_t seed = 11;
  int telescoping_trajectories = 1000;
  int sandwich_contrastive = 2000;
  int sandwich_rollouts = 2000;
  int optimal_contrastive = 255;
  int optimal_rollouts = 512;
  int cap_rollouts = 512;
  int decomposition_outer = 4000;
  int decomposition_inner = 2000;
  int dense_contrastive = 2000;
  int dense_rollouts = 2000;
};

std::vector<CheckResult> invariant_checks(const InvariantOptions& options = {});

}  // namespace iboed::diag
