#pragma once

#include "iboed/common.hpp"

#include <vector>

namespace iboed {

// Ordered (design, observation) pairs with a fixed capacity T. Stored flat:
// pair t occupies [t*(dx+dy), (t+1)*(dx+dy)) with the design first.
class History {
 public:
  History() = default;
  History(int design_dim, int obs_dim, int capacity);

  [[nodiscard]] int design_dim() const { return design_dim_; }
  [[nodiscard]] int obs_dim() const { return obs_dim_; }
  [[nodiscard]] int pair_dim() const { return design_dim_ + obs_dim_; }
  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] int length() const { return static_cast<int>(data_.size()) / (pair_dim() > 0 ? pair_dim() : 1); }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] bool full() const { return length() == capacity_; }

  [[nodiscard]] Eigen::Map<const Vector> design(int t) const;
  [[nodiscard]] Eigen::Map<const Vector> observation(int t) const;
  // The pair (design, observation) as one contiguous vector.
  [[nodiscard]] Eigen::Map<const Vector> pair(int t) const;

  // Throws ContractError when full, DimensionError on wrong sizes.
  void append(const Vector& design, const Vector& observation);

  // The first t pairs, same capacity.
  [[nodiscard]] History prefix(int t) const;
  // True when this history equals `other` with exactly one pair appended.
  [[nodiscard]] bool extends_by_one(const History& other) const;

  [[nodiscard]] const std::vector<double>& raw() const { return data_; }

  friend bool operator==(const History& a, const History& b) {
    return a.design_dim_ == b.design_dim_ && a.obs_dim_ == b.obs_dim_ && a.capacity_ == b.capacity_ &&
           a.data_ == b.data_;
  }

 private:
  int design_dim_ = 0;
  int obs_dim_ = 0;
  int capacity_ = 0;
  std::vector<double> data_;
};

// Fixed-width policy/Q input: T*(dx+dy) slots holding the pairs in order,
// zero padded, followed by the normalized step index t/T.
Vector encode_history_concat(const History& history);
inline int encoded_dim(int design_dim, int obs_dim, int capacity) { return capacity * (design_dim + obs_dim) + 1; }

}  // namespace iboed
