#include "iboed/est/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace iboed::est {

double Critic::score(const History& history, const Vector& theta) const {
  return scores(history, theta.transpose())[0];
}

Vector FunctionCritic::scores(const History& history, const Matrix& thetas) const {
  Vector out(thetas.rows());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) out[i] = fn_(history, thetas.row(i).transpose());
  return out;
}

const char* to_string(RewardKind kind) { return kind == RewardKind::Dense ? "dense" : "sparse"; }

RewardKind parse_reward_kind(const std::string& text) {
  if (text == "dense") return RewardKind::Dense;
  if (text == "sparse") return RewardKind::Sparse;
  throw std::invalid_argument("reward kind must be 'dense' or 'sparse', got '" + text + "'");
}

double contrastive_score(const Vector& scores) {
  if (scores.size() < 2) throw ContractError("contrastive_score: need theta_0 and at least one contrastive score");
  if (!scores.allFinite()) {
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores[i])) {
        throw NumericError("critic produced a non-finite score " + std::to_string(scores[i]) + " at theta index " +
                           std::to_string(i));
      }
    }
  }
  const double m = scores.maxCoeff();
  const double lse = m + std::log((scores.array() - m).exp().sum());
  return scores[0] - lse + std::log(static_cast<double>(scores.size()));
}

double g_score(const History& history, const ThetaBatch& thetas, const Critic& critic) {
  if (history.empty()) return 0.0;
  return contrastive_score(critic.scores(history, thetas.rows));
}

namespace {

void check_sequence(std::span<const History> histories) {
  if (histories.empty()) throw ContractError("reward sequence must contain h_0");
  if (!histories.front().empty()) throw ContractError("reward sequence must start at the empty history");
  for (std::size_t t = 1; t < histories.size(); ++t) {
    if (!histories[t].extends_by_one(histories[t - 1])) {
      throw ContractError("histories " + std::to_string(t - 1) + " and " + std::to_string(t) +
                          " are not consecutive");
    }
  }
}

}  // namespace

std::vector<double> dense_rewards(std::span<const History> histories, const ThetaBatch& thetas, const Critic& critic) {
  check_sequence(histories);
  std::vector<double> out;
  double prev = 0.0;
  for (std::size_t t = 1; t < histories.size(); ++t) {
    const double g = g_score(histories[t], thetas, critic);
    out.push_back(g - prev);
    prev = g;
  }
  return out;
}

std::vector<double> sparse_rewards(std::span<const History> histories, const ThetaBatch& thetas,
                                   const Critic& critic) {
  check_sequence(histories);
  std::vector<double> out(histories.size() - 1, 0.0);
  if (!out.empty()) out.back() = g_score(histories.back(), thetas, critic);
  return out;
}

env::RewardFn make_reward_fn(RewardKind kind, const Critic& critic) {
  if (kind == RewardKind::Dense) {
    return [&critic](const History& prev, const History& next, const ThetaBatch& thetas) {
      return g_score(next, thetas, critic) - g_score(prev, thetas, critic);
    };
  }
  return [&critic](const History&, const History& next, const ThetaBatch& thetas) {
    return next.full() ? g_score(next, thetas, critic) : 0.0;
  };
}

}  // namespace iboed::est
