#pragma once

#include "iboed/env/replay_buffer.hpp"
#include "iboed/nn/optim.hpp"
#include "iboed/rl/config.hpp"
#include "iboed/rl/networks.hpp"

#include <optional>
#include <span>

namespace iboed::rl {

struct Td3Agent {
  PolicyNet actor;
  PolicyNet actor_target;
  TwinQ q;
  TwinQ q_target;
  nn::AdamState actor_opt;
  nn::AdamState q_opt;
  std::int64_t updates = 0;

  Td3Agent(const sim::Model& model, const TrainerConfig& config, Rng& rng);
};

// Network-ready view of sampled transitions; encodings are scaled.
struct TransitionBatch {
  Matrix prev;     // B x D
  Matrix design;   // B x dx
  Vector reward;   // B
  Matrix next;     // B x D
  Vector done;     // B, 1.0 for terminal transitions
};

TransitionBatch make_batch(const InputScaler& scaler, std::span<const env::Transition> transitions);

// y = r + gamma (1 - done) min(Q1', Q2')(h', clamp(pi'(h') + clip(noise, +-noise_clip))).
// `noise` is the unclipped target-smoothing draw, B x dx.
Vector q_targets(const Td3Agent& agent, const TransitionBatch& batch, const Matrix& noise, double gamma,
                 double noise_clip);

struct Td3Losses {
  double q_loss = 0.0;
  std::optional<double> policy_loss;
};

// One TD3 step: regress both Q nets to q_targets; when step_index is a
// multiple of the policy update frequency also ascend Q1(h, pi(h)) and
// soft-update all three targets.
Td3Losses td3_update_batch(Td3Agent& agent, const TransitionBatch& batch, const Matrix& noise,
                           const TrainerConfig& config, std::int64_t step_index);

// Samples a batch and the smoothing noise, then runs td3_update_batch.
// Throws ContractError when the buffer is empty.
Td3Losses td3_update(Td3Agent& agent, const env::ReplayBuffer& buffer, const TrainerConfig& config,
                     std::int64_t step_index, Rng& rng);

// The Q regression loss mean((Q1 - y)^2) + mean((Q2 - y)^2), differentiable in the Q parameters.
nn::Tensor q_loss(const TwinQ& q, const TransitionBatch& batch, const Vector& targets);

}  // namespace iboed::rl
