#include "iboed/critic/training.hpp"

#include <cmath>

namespace iboed::critic {

using nn::Tensor;

Tensor infonce_objective(const CriticNet& critic, std::span<const est::Rollout> batch) {
  if (batch.empty()) throw ContractError("infonce_objective: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index K = batch.front().thetas.size();
  const int n = batch.front().history.length();
  if (n == 0) throw ContractError("infonce_objective: histories are empty");

  std::vector<History> histories;
  histories.reserve(batch.size());
  Matrix thetas(B * K, batch.front().thetas.rows.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& r = batch[b];
    if (r.thetas.size() != K) throw DimensionError("infonce_objective: rollouts disagree on L");
    thetas.middleRows(b * K, K) = r.thetas.rows;
    histories.push_back(r.history);
  }

  // Row b*K + l of the theta embedding belongs to theta_l of trajectory b.
  Tensor theta_emb = critic.encode_thetas(thetas);
  std::vector<Tensor> prefixes = critic.encode_prefixes(histories);
  Tensor total;
  for (const auto& eh : prefixes) {
    Tensor s = block_dot(eh, theta_emb);
    Tensor term = sum(sub(slice_cols(s, 0, 1), logsumexp_rows(s)));
    total = total.defined() ? add(total, term) : term;
  }
  return add_scalar(scale(total, 1.0 / static_cast<double>(B * n)), std::log(static_cast<double>(K)));
}

double train_critic_batch(CriticNet& critic, nn::AdamState& optimizer, std::span<const est::Rollout> batch) {
  if (batch.size() < 2) throw ContractError("train_critic_batch: need at least two trajectories");
  auto params = critic.parameters();
  nn::zero_grad(params);
  Tensor objective = infonce_objective(critic, batch);
  const double value = objective.item();
  if (!std::isfinite(value)) throw NumericError("critic InfoNCE objective is not finite: " + std::to_string(value));
  nn::backward(scale(objective, -1.0));
  nn::adam_step(optimizer, params);
  return value;
}

}  // namespace iboed::critic
