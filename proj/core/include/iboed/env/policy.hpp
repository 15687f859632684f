#pragma once

#include "iboed/env/history.hpp"

#include <span>
#include <vector>

namespace iboed::env {

// Maps an observed history to the next design. Implementations must only
// look at the history; parameters are never available to a policy.
class DesignPolicy {
 public:
  virtual ~DesignPolicy() = default;
  [[nodiscard]] virtual Vector act(const History& history, Rng& rng) const = 0;
  // One design per history, one row each.
  [[nodiscard]] virtual Matrix act_batch(std::span<const History> histories, Rng& rng) const;
};

// Plays a fixed design sequence; step t uses designs[min(t, size-1)].
class FixedDesignPolicy final : public DesignPolicy {
 public:
  explicit FixedDesignPolicy(std::vector<Vector> designs);
  [[nodiscard]] Vector act(const History& history, Rng& rng) const override;

 private:
  std::vector<Vector> designs_;
};

}  // namespace iboed::env
