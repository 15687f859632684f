#pragma once

#include "iboed/env/history.hpp"

#include <cstdint>
#include <mutex>
#include <vector>

namespace iboed::env {

// (h_{t-1}, xi_t, h_t, r_t). The previous history is the next history minus
// its last pair, so only the latter is stored.
struct Transition {
  History next_history;
  Vector design;
  double reward = 0.0;
  bool done = false;
  std::uint64_t trajectory_id = 0;

  [[nodiscard]] History prev_history() const { return next_history.prefix(next_history.length() - 1); }

  friend bool operator==(const Transition& a, const Transition& b) {
    return a.next_history == b.next_history && a.design == b.design && a.reward == b.reward && a.done == b.done &&
           a.trajectory_id == b.trajectory_id;
  }
};

// Fixed-capacity FIFO ring with uniform sampling (with replacement). Push and
// sample are mutually exclusive.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity);

  void push(Transition t);
  // Throws ContractError when empty.
  [[nodiscard]] std::vector<Transition> sample(std::size_t batch, Rng& rng) const;
  [[nodiscard]] std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

  // Index 0 is the oldest retained transition.
  [[nodiscard]] const Transition& at(std::size_t i) const;
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return size() == 0; }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  mutable std::mutex mutex_;
};

}  // namespace iboed::env
