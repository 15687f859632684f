#include "iboed/rl/trainer.hpp"

#include "iboed/critic/training.hpp"
#include "iboed/env/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace iboed::rl {

est::BoundEstimate evaluate_policy(const env::DesignPolicy& policy, const sim::Model& model,
                                   const est::Critic* critic, est::BoundKind kind, int num_contrastive, int horizon,
                                   int num_rollouts, Rng& rng) {
  switch (kind) {
    case est::BoundKind::Spce: return est::spce_bound(model, policy, num_contrastive, horizon, num_rollouts, rng);
    case est::BoundKind::Snmc: return est::snmc_bound(model, policy, num_contrastive, horizon, num_rollouts, rng);
    case est::BoundKind::InfoNce:
      if (critic == nullptr) throw ContractError("InfoNCE evaluation needs a critic");
      return est::infonce_bound(policy, *critic, model, num_contrastive, horizon, num_rollouts, rng);
  }
  throw ContractError("unknown bound kind");
}

Trainer::Trainer(const sim::Model& model, TrainerConfig config)
    : model_(model),
      config_(std::move(config)),
      rng_(make_rng(config_.seed, 0)),
      agent_(model_, (config_.validate(), config_), rng_),
      critic_(model_, config_.critic, rng_),
      target_(critic_.clone()),
      critic_opt_(nn::AdamConfig{config_.critic_learning_rate}, critic_.parameters()),
      buffer_(static_cast<std::size_t>(config_.replay_capacity)),
      start_(std::chrono::steady_clock::now()) {}

void Trainer::restore_counters(std::int64_t env_steps, std::int64_t iterations, std::int64_t next_trajectory_id) {
  env_steps_ = env_steps;
  iterations_ = iterations;
  next_trajectory_id_ = next_trajectory_id;
}

void Trainer::run() {
  while (iterate()) {
  }
}

Vector Trainer::g_scores(const std::vector<env::TrajectoryState>& states, const std::vector<Matrix>& theta_emb) const {
  std::vector<History> histories;
  histories.reserve(states.size());
  for (const auto& s : states) histories.push_back(s.history);
  const Matrix eh = target_.embed_histories(histories);
  Vector g(static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    g[idx] = est::contrastive_score(theta_emb[i] * eh.row(idx).transpose());
  }
  return g;
}

bool Trainer::iterate() {
  const int T = config_.horizon;
  // The last iteration runs fewer environments so the budget is never exceeded.
  const std::int64_t room = (config_.total_timesteps - env_steps_) / T;
  if (room <= 0) return false;
  const int P = static_cast<int>(std::min<std::int64_t>(config_.parallel_envs, room));
  const std::int64_t before = env_steps_;
  const bool dense = config_.reward == est::RewardKind::Dense;

  const std::uint64_t base = rng_();
  std::vector<env::TrajectoryState> states;
  states.reserve(P);
  for (int i = 0; i < P; ++i) {
    states.push_back(env::reset(model_, config_.num_contrastive, T, mix_seed(base, static_cast<std::uint64_t>(i)),
                                static_cast<std::uint64_t>(next_trajectory_id_++)));
  }

  // Target-critic parameter embeddings stay fixed for the whole rollout phase.
  const Eigen::Index K = config_.num_contrastive + 1;
  std::vector<Matrix> theta_emb(P);
  {
    Matrix all(P * K, model_.theta_dim());
    for (int i = 0; i < P; ++i) all.middleRows(i * K, K) = states[i].thetas.rows;
    const Matrix emb = target_.embed_thetas(all);
    for (int i = 0; i < P; ++i) theta_emb[i] = emb.middleRows(i * K, K);
  }

  const bool keep_paths = static_cast<bool>(hooks_.on_trajectory);
  std::vector<std::vector<History>> paths(keep_paths ? P : 0);
  std::vector<std::vector<double>> rewards(keep_paths ? P : 0);
  if (keep_paths) {
    for (int i = 0; i < P; ++i) paths[i].push_back(states[i].history);
  }

  const RandomPolicy random(model_.bounds());
  Vector prev_g = Vector::Zero(P);
  std::vector<History> histories(P);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < P; ++i) histories[i] = states[i].history;
    Matrix designs(P, model_.design_dim());
    if (env_steps_ < config_.initial_random_timesteps) {
      for (int i = 0; i < P; ++i) designs.row(i) = random.act(histories[i], rng_).transpose();
    } else {
      designs = select_actions(agent_.actor, histories, config_.exploration_noise, rng_);
    }
    for (int i = 0; i < P; ++i) env::step(states[i], designs.row(i).transpose(), model_, nullptr);

    const bool last = t + 1 == T;
    Vector r = Vector::Zero(P);
    if (dense || last) {
      const Vector g = g_scores(states, theta_emb);
      r = dense ? Vector(g - prev_g) : g;
      prev_g = g;
    }
    for (int i = 0; i < P; ++i) {
      buffer_.push(env::Transition{states[i].history, designs.row(i).transpose(), r[i], last,
                                   states[i].trajectory_id});
      if (keep_paths) {
        paths[i].push_back(states[i].history);
        rewards[i].push_back(r[i]);
      }
    }
    env_steps_ += P;
  }

  if (keep_paths) {
    for (int i = 0; i < P; ++i) {
      hooks_.on_trajectory(CompletedTrajectory{std::move(paths[i]), states[i].thetas, std::move(rewards[i]), &target_});
    }
  }

  // TD3 on the replay buffer.
  if (env_steps_ >= config_.initial_random_timesteps && buffer_.size() > 0) {
    const int n_updates = T * config_.updates_per_timestep;
    for (int k = 0; k < n_updates; ++k) {
      const auto losses = td3_update(agent_, buffer_, config_, agent_.updates + 1, rng_);
      q_sum_ += losses.q_loss;
      ++q_n_;
      if (losses.policy_loss) {
        pi_sum_ += *losses.policy_loss;
        ++pi_n_;
      }
    }
  }

  // InfoNCE on minibatches of this rollout.
  std::vector<est::Rollout> rollouts;
  rollouts.reserve(P);
  for (auto& s : states) rollouts.push_back(est::Rollout{std::move(s.history), std::move(s.thetas)});
  const int mb = std::min(config_.critic_batch_size, P);
  std::vector<int> order(P);
  std::vector<est::Rollout> batch;
  for (int k = 0; k < config_.critic_updates_per_iteration && mb >= 2; ++k) {
    std::iota(order.begin(), order.end(), 0);
    batch.clear();
    for (int j = 0; j < mb; ++j) {
      std::uniform_int_distribution<int> pick(j, P - 1);
      std::swap(order[j], order[pick(rng_)]);
      batch.push_back(rollouts[order[j]]);
    }
    critic_sum_ += critic::train_critic_batch(critic_, critic_opt_, batch);
    ++critic_n_;
    critic::target_sync(critic_, target_, config_.critic_tau);
  }

  ++iterations_;
  maybe_log(before);
  return true;
}

est::BoundEstimate Trainer::evaluate(Rng& rng) const {
  const NetworkPolicy policy(agent_.actor);
  return evaluate_policy(policy, model_, &critic_, config_.eval_bound, config_.eval_contrastive, config_.horizon,
                         config_.eval_rollouts, rng);
}

void Trainer::maybe_log(std::int64_t before) {
  const bool finished = config_.total_timesteps - env_steps_ < config_.horizon;
  bool due = finished;
  if (config_.eval_every > 0) due = due || env_steps_ / config_.eval_every > before / config_.eval_every;
  else due = true;
  if (!due) return;

  MetricsRow row;
  row.step = env_steps_;
  const auto avg = [](double s, std::int64_t n) { return n > 0 ? s / static_cast<double>(n) : 0.0; };
  row.q_loss = avg(q_sum_, q_n_);
  row.policy_loss = avg(pi_sum_, pi_n_);
  row.critic_loss = avg(critic_sum_, critic_n_);
  q_sum_ = pi_sum_ = critic_sum_ = 0.0;
  q_n_ = pi_n_ = critic_n_ = 0;
  if (config_.eval_every > 0) {
    // Evaluation draws from its own stream so it never perturbs training.
    Rng eval_rng = make_rng(config_.seed, 0xE7A1000 + static_cast<std::uint64_t>(iterations_));
    const auto e = evaluate(eval_rng);
    row.eval_bound = e.value;
    row.eval_stderr = e.std_error;
  } else {
    row.eval_bound = std::numeric_limits<double>::quiet_NaN();
    row.eval_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  if (config_.record_wall_clock) {
    row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  metrics_.push_back(row);
  if (hooks_.on_metrics) hooks_.on_metrics(row);
}

}  // namespace iboed::rl
