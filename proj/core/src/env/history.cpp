#include "iboed/env/history.hpp"

#include <algorithm>

namespace iboed {

History::History(int design_dim, int obs_dim, int capacity)
    : design_dim_(design_dim), obs_dim_(obs_dim), capacity_(capacity) {
  if (design_dim <= 0 || obs_dim <= 0 || capacity <= 0) {
    throw DimensionError("History: dimensions and capacity must be positive");
  }
  data_.reserve(static_cast<std::size_t>(capacity) * pair_dim());
}

Eigen::Map<const Vector> History::design(int t) const {
  if (t < 0 || t >= length()) throw ContractError("History: pair index out of range");
  return {data_.data() + static_cast<std::size_t>(t) * pair_dim(), design_dim_};
}

Eigen::Map<const Vector> History::observation(int t) const {
  if (t < 0 || t >= length()) throw ContractError("History: pair index out of range");
  return {data_.data() + static_cast<std::size_t>(t) * pair_dim() + design_dim_, obs_dim_};
}

Eigen::Map<const Vector> History::pair(int t) const {
  if (t < 0 || t >= length()) throw ContractError("History: pair index out of range");
  return {data_.data() + static_cast<std::size_t>(t) * pair_dim(), pair_dim()};
}

void History::append(const Vector& design, const Vector& observation) {
  if (full()) throw ContractError("History: append beyond capacity " + std::to_string(capacity_));
  if (design.size() != design_dim_ || observation.size() != obs_dim_) {
    throw DimensionError("History: pair dims (" + std::to_string(design.size()) + "," +
                         std::to_string(observation.size()) + "), expected (" + std::to_string(design_dim_) + "," +
                         std::to_string(obs_dim_) + ")");
  }
  data_.insert(data_.end(), design.data(), design.data() + design.size());
  data_.insert(data_.end(), observation.data(), observation.data() + observation.size());
}

History History::prefix(int t) const {
  if (t < 0 || t > length()) throw ContractError("History: prefix length out of range");
  History h = *this;
  h.data_.resize(static_cast<std::size_t>(t) * pair_dim());
  return h;
}

bool History::extends_by_one(const History& other) const {
  if (design_dim_ != other.design_dim_ || obs_dim_ != other.obs_dim_ || length() != other.length() + 1) return false;
  return std::equal(other.data_.begin(), other.data_.end(), data_.begin());
}

Vector encode_history_concat(const History& history) {
  const int width = history.capacity() * history.pair_dim();
  Vector out = Vector::Zero(width + 1);
  const auto& raw = history.raw();
  std::copy(raw.begin(), raw.end(), out.data());
  out[width] = static_cast<double>(history.length()) / history.capacity();
  return out;
}

}  // namespace iboed
