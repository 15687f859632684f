#pragma once

#include "iboed/env/history.hpp"

#include <atomic>
#include <memory>
#include <string>

namespace iboed::sim {

struct DesignBounds {
  Vector lower;
  Vector upper;

  [[nodiscard]] Vector center() const { return 0.5 * (lower + upper); }
  [[nodiscard]] Vector half_width() const { return 0.5 * (upper - lower); }
  [[nodiscard]] bool contains(const Vector& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
  [[nodiscard]] Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

// Affine maps (value - center) / scale applied to network inputs; the raw
// history and parameter values stay untouched everywhere else.
struct FeatureScaling {
  Vector design_center, design_scale;
  Vector obs_center, obs_scale;
  Vector theta_center, theta_scale;
};

// Ground truth theta_0 in row 0 followed by L contrastive draws, one row each.
struct ThetaBatch {
  Matrix rows;

  [[nodiscard]] Eigen::Index size() const { return rows.rows(); }
  [[nodiscard]] Eigen::Index num_contrastive() const { return rows.rows() - 1; }
  [[nodiscard]] Vector theta0() const { return rows.row(0).transpose(); }
  [[nodiscard]] Vector theta(Eigen::Index l) const { return rows.row(l).transpose(); }
};

// Trajectory-scoped hidden simulator state (e.g. a shared epidemic path).
// Created once per trajectory from theta_0 and a dedicated seed.
class Latent {
 public:
  virtual ~Latent() = default;
};

// A black-box implicit model y ~ p(y | theta, xi, h). Immutable after
// construction apart from the out-of-bounds counter; simulate() is reentrant
// given caller-owned RNGs.
class Model {
 public:
  virtual ~Model() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual int design_dim() const = 0;
  [[nodiscard]] virtual int obs_dim() const = 0;
  [[nodiscard]] virtual int theta_dim() const = 0;
  [[nodiscard]] virtual const DesignBounds& bounds() const = 0;
  // True when the observation law depends only on (theta, xi).
  [[nodiscard]] virtual bool conditionally_independent() const = 0;
  [[nodiscard]] virtual FeatureScaling scaling() const;

  [[nodiscard]] virtual Vector sample_prior(Rng& rng) const = 0;
  [[nodiscard]] virtual std::unique_ptr<Latent> begin_trajectory(const Vector& theta, Rng& rng) const;

  // Out-of-bounds designs are clamped and counted.
  [[nodiscard]] Vector simulate(const Vector& theta, const Vector& design, const History& history, Rng& rng,
                                Latent* latent = nullptr) const;

  [[nodiscard]] virtual bool has_likelihood() const { return false; }
  // log p(y | theta, xi, h_prev). Throws UnsupportedCapability without an analytic likelihood.
  [[nodiscard]] virtual double log_likelihood_step(const Vector& theta, const Vector& design, const Vector& obs) const;
  // sum_t log p(y_t | theta, xi_t); zero for the empty history.
  [[nodiscard]] double log_likelihood(const Vector& theta, const History& history) const;
  // One log-likelihood per row of `thetas`.
  [[nodiscard]] virtual Vector log_likelihood_batch(const Matrix& thetas, const History& history) const;

  [[nodiscard]] std::uint64_t clamp_count() const { return clamp_count_.load(std::memory_order_relaxed); }

 protected:
  [[nodiscard]] virtual Vector do_simulate(const Vector& theta, const Vector& design, const History& history,
                                           Rng& rng, Latent* latent) const = 0;
  void require_likelihood() const;

 private:
  mutable std::atomic<std::uint64_t> clamp_count_{0};
};

// Draws count = L + 1 >= 2 i.i.d. prior samples; row 0 is the ground truth.
ThetaBatch sample_prior(const Model& model, int count, Rng& rng);

}  // namespace iboed::sim
