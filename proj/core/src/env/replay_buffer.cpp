#include "iboed/env/replay_buffer.hpp"

namespace iboed::env {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  std::lock_guard lock(mutex_);
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (items_.empty()) throw ContractError("ReplayBuffer: sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  const auto idx = sample_indices(batch, rng);
  std::vector<Transition> out;
  out.reserve(batch);
  for (auto i : idx) out.push_back(at(i));
  return out;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  std::lock_guard lock(mutex_);
  if (i >= items_.size()) throw ContractError("ReplayBuffer: index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

}  // namespace iboed::env
