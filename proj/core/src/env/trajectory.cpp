#include "iboed/env/trajectory.hpp"

namespace iboed::env {

namespace {

constexpr std::uint64_t kThetaStream = 0;
constexpr std::uint64_t kLatentStream = 1;
constexpr std::uint64_t kStepStreamBase = 1000;

}  // namespace

TrajectoryState TrajectoryState::at(const sim::Model& model, const History& history, ThetaBatch thetas,
                                    std::uint64_t seed, std::uint64_t trajectory_id) {
  TrajectoryState s;
  s.history = history;
  s.thetas = std::move(thetas);
  Rng latent_rng = make_rng(seed, kLatentStream);
  s.latent = model.begin_trajectory(s.thetas.theta0(), latent_rng);
  s.trajectory_id = trajectory_id;
  s.seed = seed;
  s.done = history.full();
  return s;
}

TrajectoryState reset(const sim::Model& model, int num_contrastive, int horizon, std::uint64_t seed,
                      std::uint64_t trajectory_id) {
  if (num_contrastive < 1) throw ContractError("reset: need at least one contrastive sample");
  Rng theta_rng = make_rng(seed, kThetaStream);
  ThetaBatch thetas = sim::sample_prior(model, num_contrastive + 1, theta_rng);
  return TrajectoryState::at(model, History(model.design_dim(), model.obs_dim(), horizon), std::move(thetas), seed,
                             trajectory_id);
}

TrajectoryState reset(const sim::Model& model, int num_contrastive, int horizon, Rng& rng,
                      std::uint64_t trajectory_id) {
  return reset(model, num_contrastive, horizon, rng(), trajectory_id);
}

StepResult step(TrajectoryState& state, const Vector& design, const sim::Model& model, const RewardFn& reward) {
  if (state.done) throw ContractError("step: trajectory already finished");
  const int t = state.history.length();
  Rng step_rng = make_rng(state.seed, kStepStreamBase + static_cast<std::uint64_t>(t));
  Vector y = model.simulate(state.thetas.theta0(), design, state.history, step_rng, state.latent.get());
  History prev = state.history;
  state.history.append(model.bounds().clamp(design), y);
  StepResult out;
  out.reward = reward ? reward(prev, state.history, state.thetas) : 0.0;
  state.done = state.history.full();
  out.done = state.done;
  out.observation = std::move(y);
  return out;
}

History rollout_at(const sim::Model& model, const DesignPolicy& policy, const Vector& theta0, int horizon,
                   std::uint64_t seed, Rng& policy_rng) {
  if (theta0.size() != model.theta_dim()) {
    throw DimensionError("rollout_at: theta0 has " + std::to_string(theta0.size()) + " entries, model expects " +
                         std::to_string(model.theta_dim()));
  }
  ThetaBatch thetas{theta0.transpose()};
  auto state =
      TrajectoryState::at(model, History(model.design_dim(), model.obs_dim(), horizon), std::move(thetas), seed);
  while (!state.done) step(state, policy.act(state.history, policy_rng), model, nullptr);
  return state.history;
}

}  // namespace iboed::env
