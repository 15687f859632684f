#include "iboed/env/policy.hpp"

#include <algorithm>

namespace iboed::env {

Matrix DesignPolicy::act_batch(std::span<const History> histories, Rng& rng) const {
  Matrix out;
  for (std::size_t i = 0; i < histories.size(); ++i) {
    Vector d = act(histories[i], rng);
    if (i == 0) out.resize(static_cast<Eigen::Index>(histories.size()), d.size());
    out.row(static_cast<Eigen::Index>(i)) = d.transpose();
  }
  return out;
}

FixedDesignPolicy::FixedDesignPolicy(std::vector<Vector> designs) : designs_(std::move(designs)) {
  if (designs_.empty()) throw ContractError("FixedDesignPolicy: need at least one design");
}

Vector FixedDesignPolicy::act(const History& history, Rng&) const {
  const auto t = std::min<std::size_t>(static_cast<std::size_t>(history.length()), designs_.size() - 1);
  return designs_[t];
}

}  // namespace iboed::env
