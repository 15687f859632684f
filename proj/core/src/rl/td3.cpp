#include "iboed/rl/td3.hpp"

#include <cmath>

namespace iboed::rl {

using nn::Tensor;

Td3Agent::Td3Agent(const sim::Model& model, const TrainerConfig& config, Rng& rng)
    : actor(model, config.horizon, config.hidden, rng),
      actor_target(actor.clone()),
      q(model, config.horizon, config.hidden, rng),
      q_target(q.clone()),
      actor_opt(nn::AdamConfig{config.learning_rate}, actor.parameters()),
      q_opt(nn::AdamConfig{config.learning_rate}, q.parameters()) {}

TransitionBatch make_batch(const InputScaler& scaler, std::span<const env::Transition> transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  TransitionBatch b;
  b.prev.resize(n, scaler.encoded_dim());
  b.next.resize(n, scaler.encoded_dim());
  b.design.resize(n, scaler.design_dim());
  b.reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[i];
    b.prev.row(i) = scaler.encode(tr.prev_history());
    b.next.row(i) = scaler.encode(tr.next_history);
    b.design.row(i) = tr.design.transpose();
    b.reward[i] = tr.reward;
    b.done[i] = tr.done ? 1.0 : 0.0;
  }
  return b;
}

Vector q_targets(const Td3Agent& agent, const TransitionBatch& batch, const Matrix& noise, double gamma,
                 double noise_clip) {
  nn::NoGradGuard guard;
  const auto& bounds = agent.actor_target.bounds();
  Matrix next_action = agent.actor_target.predict(batch.next) + noise.cwiseMax(-noise_clip).cwiseMin(noise_clip);
  for (Eigen::Index r = 0; r < next_action.rows(); ++r) {
    next_action.row(r) = bounds.clamp(next_action.row(r).transpose()).transpose();
  }
  const Tensor enc = Tensor::constant(batch.next);
  const Tensor act = Tensor::constant(next_action);
  const Matrix q1 = agent.q_target.q1(enc, act).value();
  const Matrix q2 = agent.q_target.q2(enc, act).value();
  const Vector qmin = q1.col(0).cwiseMin(q2.col(0));
  return batch.reward + gamma * (Vector::Ones(batch.done.size()) - batch.done).cwiseProduct(qmin);
}

Tensor q_loss(const TwinQ& q, const TransitionBatch& batch, const Vector& targets) {
  const Tensor enc = Tensor::constant(batch.prev);
  const Tensor act = Tensor::constant(batch.design);
  const Tensor y = Tensor::constant(Matrix(targets));
  return add(mean(square(sub(q.q1(enc, act), y))), mean(square(sub(q.q2(enc, act), y))));
}

Td3Losses td3_update_batch(Td3Agent& agent, const TransitionBatch& batch, const Matrix& noise,
                           const TrainerConfig& config, std::int64_t step_index) {
  Td3Losses out;
  const Vector y = q_targets(agent, batch, noise, config.gamma, config.noise_clip);

  auto q_params = agent.q.parameters();
  nn::zero_grad(q_params);
  Tensor loss = q_loss(agent.q, batch, y);
  out.q_loss = loss.item();
  if (!std::isfinite(out.q_loss)) throw NumericError("TD3 Q loss is not finite: " + std::to_string(out.q_loss));
  nn::backward(loss);
  nn::adam_step(agent.q_opt, q_params);

  if (step_index % config.policy_update_frequency == 0) {
    auto actor_params = agent.actor.parameters();
    nn::zero_grad(actor_params);
    const Tensor enc = Tensor::constant(batch.prev);
    Tensor policy_loss = scale(mean(agent.q.q1(enc, agent.actor.forward(enc))), -1.0);
    out.policy_loss = policy_loss.item();
    if (!std::isfinite(*out.policy_loss)) {
      throw NumericError("TD3 policy loss is not finite: " + std::to_string(*out.policy_loss));
    }
    nn::backward(policy_loss);
    nn::adam_step(agent.actor_opt, actor_params);
    nn::zero_grad(q_params);

    nn::soft_update(agent.q_target.parameters(), q_params, config.tau);
    nn::soft_update(agent.actor_target.parameters(), actor_params, config.tau);
  }
  ++agent.updates;
  return out;
}

Td3Losses td3_update(Td3Agent& agent, const env::ReplayBuffer& buffer, const TrainerConfig& config,
                     std::int64_t step_index, Rng& rng) {
  if (buffer.size() == 0) throw ContractError("td3_update: replay buffer is empty");
  const auto transitions = buffer.sample(static_cast<std::size_t>(config.batch_size), rng);
  const TransitionBatch batch = make_batch(agent.actor.scaler(), transitions);
  Matrix noise(batch.design.rows(), batch.design.cols());
  std::normal_distribution<double> normal(0.0, config.policy_noise);
  for (Eigen::Index r = 0; r < noise.rows(); ++r)
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = normal(rng);
  return td3_update_batch(agent, batch, noise, config, step_index);
}

}  // namespace iboed::rl
