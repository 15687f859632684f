#include "iboed/est/bounds.hpp"

#include "iboed/env/trajectory.hpp"
#include "iboed/est/rewards.hpp"
#include "iboed/parallel.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace iboed::est {

namespace {

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double log_mean_exp(const Eigen::Ref<const Vector>& v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

void require_likelihood(const sim::Model& model) {
  if (!model.has_likelihood()) {
    throw UnsupportedCapability("bound requires an analytic likelihood; " + model.name() + " is likelihood-free");
  }
}

}  // namespace

const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::Spce: return "spce";
    case BoundKind::Snmc: return "snmc";
    case BoundKind::InfoNce: return "infonce";
  }
  return "?";
}

BoundKind parse_bound_kind(const std::string& text) {
  if (text == "spce") return BoundKind::Spce;
  if (text == "snmc") return BoundKind::Snmc;
  if (text == "infonce") return BoundKind::InfoNce;
  throw std::invalid_argument("bound must be one of spce, snmc, infonce; got '" + text + "'");
}

BoundEstimate summarize(BoundKind kind, int num_contrastive, std::vector<double> per_rollout) {
  BoundEstimate e;
  e.kind = kind;
  e.num_contrastive = num_contrastive;
  e.num_rollouts = static_cast<int>(per_rollout.size());
  const auto ms = mean_se(per_rollout);
  e.value = ms.mean;
  e.std_error = ms.se;
  e.per_rollout = std::move(per_rollout);
  return e;
}

void for_each_rollout(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                      int count, Rng& rng, const std::function<void(const Rollout&, int)>& fn, int chunk) {
  if (count < 0 || horizon < 1 || chunk < 1) throw ContractError("for_each_rollout: invalid sizes");
  const std::uint64_t base = rng();
  for (int start = 0; start < count; start += chunk) {
    const int n = std::min(chunk, count - start);
    std::vector<env::TrajectoryState> states;
    states.reserve(n);
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::uint64_t>(start + i);
      states.push_back(env::reset(model, num_contrastive, horizon, mix_seed(base, idx), idx));
    }
    std::vector<History> histories(n);
    Rng policy_rng = make_rng(base, 0xA11CE + static_cast<std::uint64_t>(start));
    for (int t = 0; t < horizon; ++t) {
      for (int i = 0; i < n; ++i) histories[i] = states[i].history;
      const Matrix designs = policy.act_batch(histories, policy_rng);
      parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        env::step(states[i], designs.row(static_cast<Eigen::Index>(i)).transpose(), model, nullptr);
      });
    }
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      const Rollout r{std::move(states[i].history), std::move(states[i].thetas)};
      fn(r, start + static_cast<int>(i));
    });
  }
}

std::vector<Rollout> simulate_rollouts(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive,
                                       int horizon, int count, Rng& rng) {
  std::vector<Rollout> out(count);
  for_each_rollout(model, policy, num_contrastive, horizon, count, rng, [&](const Rollout& r, int i) { out[i] = r; });
  return out;
}

double spce_term(const sim::Model& model, const Rollout& rollout) {
  const Vector ll = model.log_likelihood_batch(rollout.thetas.rows, rollout.history);
  return ll[0] - log_mean_exp(ll);
}

double snmc_term(const sim::Model& model, const Rollout& rollout) {
  const Vector ll = model.log_likelihood_batch(rollout.thetas.rows, rollout.history);
  return ll[0] - log_mean_exp(ll.tail(ll.size() - 1));
}

std::vector<double> spce_terms(const sim::Model& model, const std::vector<Rollout>& rollouts) {
  require_likelihood(model);
  std::vector<double> out;
  out.reserve(rollouts.size());
  for (const auto& r : rollouts) out.push_back(spce_term(model, r));
  return out;
}

std::vector<double> snmc_terms(const sim::Model& model, const std::vector<Rollout>& rollouts) {
  require_likelihood(model);
  std::vector<double> out;
  out.reserve(rollouts.size());
  for (const auto& r : rollouts) out.push_back(snmc_term(model, r));
  return out;
}

std::vector<double> infonce_terms(const Critic& critic, const std::vector<Rollout>& rollouts) {
  std::vector<double> out;
  out.reserve(rollouts.size());
  for (const auto& r : rollouts) out.push_back(g_score(r.history, r.thetas, critic));
  return out;
}

LikelihoodBounds likelihood_bounds(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive,
                                   int horizon, int num_rollouts, Rng& rng) {
  require_likelihood(model);
  std::vector<double> spce(num_rollouts), snmc(num_rollouts);
  for_each_rollout(model, policy, num_contrastive, horizon, num_rollouts, rng, [&](const Rollout& r, int i) {
    const Vector ll = model.log_likelihood_batch(r.thetas.rows, r.history);
    spce[i] = ll[0] - log_mean_exp(ll);
    snmc[i] = ll[0] - log_mean_exp(ll.tail(ll.size() - 1));
  });
  return {summarize(BoundKind::Spce, num_contrastive, std::move(spce)),
          summarize(BoundKind::Snmc, num_contrastive, std::move(snmc))};
}

BoundEstimate spce_bound(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                         int num_rollouts, Rng& rng) {
  require_likelihood(model);
  std::vector<double> terms(num_rollouts);
  for_each_rollout(model, policy, num_contrastive, horizon, num_rollouts, rng,
                   [&](const Rollout& r, int i) { terms[i] = spce_term(model, r); });
  return summarize(BoundKind::Spce, num_contrastive, std::move(terms));
}

BoundEstimate snmc_bound(const sim::Model& model, const env::DesignPolicy& policy, int num_contrastive, int horizon,
                         int num_rollouts, Rng& rng) {
  require_likelihood(model);
  std::vector<double> terms(num_rollouts);
  for_each_rollout(model, policy, num_contrastive, horizon, num_rollouts, rng,
                   [&](const Rollout& r, int i) { terms[i] = snmc_term(model, r); });
  return summarize(BoundKind::Snmc, num_contrastive, std::move(terms));
}

BoundEstimate infonce_bound(const env::DesignPolicy& policy, const Critic& critic, const sim::Model& model,
                            int num_contrastive, int horizon, int num_rollouts, Rng& rng) {
  std::vector<double> terms(num_rollouts);
  for_each_rollout(model, policy, num_contrastive, horizon, num_rollouts, rng,
                   [&](const Rollout& r, int i) { terms[i] = g_score(r.history, r.thetas, critic); });
  return summarize(BoundKind::InfoNce, num_contrastive, std::move(terms));
}

double DecompositionCheck::combined_se() const { return std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se); }

DecompositionCheck marginal_eig_decomposition_check(const sim::Model& model, const env::DesignPolicy& policy,
                                                    int horizon, int outer_samples, int inner_samples, Rng& rng) {
  require_likelihood(model);
  if (horizon < 1 || outer_samples < 2 || inner_samples < 1) {
    throw ContractError("decomposition check: need horizon >= 1, >= 2 outer and >= 1 inner samples");
  }
  std::vector<double> total(outer_samples), summed(outer_samples);
  std::vector<std::vector<double>> marginal(horizon, std::vector<double>(outer_samples));

  // Inner sets: index 0 serves the total and the last marginal; 1..T-1 the others.
  const std::uint64_t inner_seed = rng();
  const int T = horizon;
  for_each_rollout(model, policy, 1, T, outer_samples, rng, [&](const Rollout& r, int i) {
    const Vector theta0 = r.thetas.theta0();
    Rng inner_rng = make_rng(inner_seed, static_cast<std::uint64_t>(i));
    std::vector<Matrix> sets(T);
    for (int s = 0; s < T; ++s) {
      sets[s].resize(inner_samples, model.theta_dim());
      for (int m = 0; m < inner_samples; ++m) sets[s].row(m) = model.sample_prior(inner_rng).transpose();
    }
    const History& h = r.history;
    total[i] = model.log_likelihood(theta0, h) - log_mean_exp(model.log_likelihood_batch(sets[0], h));
    double acc = 0.0;
    for (int t = 1; t <= T; ++t) {
      const Matrix& set = t == T ? sets[0] : sets[t];
      const History ht = h.prefix(t);
      const History hprev = h.prefix(t - 1);
      const double log_pred =
          log_mean_exp(model.log_likelihood_batch(set, ht)) -
          (t == 1 ? 0.0 : log_mean_exp(model.log_likelihood_batch(set, hprev)));
      const double m = model.log_likelihood_step(theta0, h.design(t - 1), h.observation(t - 1)) - log_pred;
      marginal[t - 1][i] = m;
      acc += m;
    }
    summed[i] = acc;
  });

  DecompositionCheck out;
  const auto l = mean_se(total);
  const auto rr = mean_se(summed);
  out.lhs = l.mean;
  out.lhs_se = l.se;
  out.rhs = rr.mean;
  out.rhs_se = rr.se;
  out.diff = out.lhs - out.rhs;
  for (const auto& m : marginal) {
    const auto ms = mean_se(m);
    out.marginals.push_back(ms.mean);
    out.marginal_se.push_back(ms.se);
  }
  return out;
}

}  // namespace iboed::est
