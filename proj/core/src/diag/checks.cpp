#include "iboed/diag/checks.hpp"

#include "iboed/critic/critic_net.hpp"
#include "iboed/critic/training.hpp"
#include "iboed/est/bounds.hpp"
#include "iboed/est/rewards.hpp"
#include "iboed/nn/optim.hpp"
#include "iboed/rl/td3.hpp"
#include "iboed/sim/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace iboed::diag {

using nn::Tensor;

std::string format_result(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << r.name << "  value=" << r.value << " threshold=" << r.threshold << " ("
      << std::fixed;
  out.precision(2);
  out << r.seconds << " s)";
  if (!r.detail.empty()) out << "  " << r.detail;
  return out.str();
}

namespace {

template <typename Fn>
CheckResult timed(const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

// sum(out .* C) for a fixed random C, so every output entry carries gradient.
Tensor project(const Tensor& out, const Matrix& c) { return nn::sum(nn::mul(out, Tensor::constant(c))); }

// Fresh layers have zero biases; jitter every entry so the instance is generic.
void jitter(const nn::ParameterList& params, Rng& rng) {
  for (auto p : params) p.mutable_value() += random_matrix(p.rows(), p.cols(), rng, 0.1);
}

CheckResult grad_result(double err, const GradCheckOptions& o, std::string detail = {}) {
  CheckResult r;
  r.value = err;
  r.threshold = o.tolerance;
  r.passed = std::isfinite(err) && err < o.tolerance;
  r.detail = std::move(detail);
  return r;
}

std::vector<est::Rollout> random_rollouts(const sim::Model& model, int L, int T, int n, Rng& rng) {
  const rl::RandomPolicy policy(model.bounds());
  return est::simulate_rollouts(model, policy, L, T, n, rng);
}

critic::CriticConfig small_critic(critic::HistoryEncoder kind) {
  critic::CriticConfig c;
  c.encoder = kind;
  c.embed_dim = 6;
  c.pair_hidden = {8};
  c.attention_hidden = {6};
  c.lstm_hidden = 6;
  c.theta_hidden = {8};
  return c;
}

CheckResult check_critic(const GradCheckOptions& o, const std::string& model_name, critic::HistoryEncoder kind) {
  Rng rng = make_rng(o.seed, 3);
  const auto model = sim::make_model(model_name);
  const critic::CriticNet net(*model, small_critic(kind), rng);
  jitter(net.parameters(), rng);
  const auto batch = random_rollouts(*model, 4, 3, 3, rng);
  const double err = nn::finite_diff_check([&] { return critic::infonce_objective(net, batch); }, net.parameters(),
                                           o.epsilon);
  return grad_result(err, o, std::string("encoder=") + critic::to_string(net.encoder_kind()));
}

struct Td3Fixture {
  std::unique_ptr<sim::Model> model;
  rl::TrainerConfig config;
  std::unique_ptr<rl::Td3Agent> agent;
  rl::TransitionBatch batch;
  Vector targets;
};

Td3Fixture td3_fixture(const GradCheckOptions& o) {
  Td3Fixture f;
  Rng rng = make_rng(o.seed, 5);
  f.model = sim::make_model("location_finding");
  f.config.hidden = {8, 8};
  f.config.horizon = 3;
  f.agent = std::make_unique<rl::Td3Agent>(*f.model, f.config, rng);
  jitter(f.agent->actor.parameters(), rng);
  jitter(f.agent->q.parameters(), rng);
  std::vector<env::Transition> transitions;
  const rl::RandomPolicy policy(f.model->bounds());
  for (int i = 0; i < 3; ++i) {
    auto s = env::reset(*f.model, 2, f.config.horizon, rng(), static_cast<std::uint64_t>(i));
    for (int t = 0; t < f.config.horizon; ++t) {
      const Vector x = policy.act(s.history, rng);
      env::step(s, x, *f.model, nullptr);
      transitions.push_back(env::Transition{s.history, x, std::normal_distribution<double>()(rng), s.done,
                                            static_cast<std::uint64_t>(i)});
    }
  }
  f.batch = rl::make_batch(f.agent->actor.scaler(), transitions);
  const Matrix noise = random_matrix(f.batch.design.rows(), f.batch.design.cols(), rng, f.config.policy_noise);
  f.targets = rl::q_targets(*f.agent, f.batch, noise, f.config.gamma, f.config.noise_clip);
  return f;
}

const std::map<std::string, std::function<CheckResult(const GradCheckOptions&)>>& grad_table() {
  static const std::map<std::string, std::function<CheckResult(const GradCheckOptions&)>> table = {
      {"mlp",
       [](const GradCheckOptions& o) {
         Rng rng = make_rng(o.seed, 0);
         const nn::Mlp mlp(nn::MlpSpec{4, {6, 5}, 3, nn::Activation::Relu, nn::Activation::Tanh}, rng);
         jitter(mlp.parameters(), rng);
         const Tensor x = Tensor::constant(random_matrix(5, 4, rng));
         const Matrix c = random_matrix(5, 3, rng);
         return grad_result(nn::finite_diff_check([&] { return project(mlp.forward(x), c); }, mlp.parameters(),
                                                  o.epsilon),
                            o);
       }},
      {"lstm",
       [](const GradCheckOptions& o) {
         Rng rng = make_rng(o.seed, 1);
         const nn::Lstm lstm(nn::LstmSpec{3, 4}, rng);
         jitter(lstm.parameters(), rng);
         std::vector<Tensor> seq;
         for (int t = 0; t < 4; ++t) seq.push_back(Tensor::constant(random_matrix(2, 3, rng)));
         const Matrix c = random_matrix(2, 4, rng);
         return grad_result(
             nn::finite_diff_check([&] { return project(lstm.forward_sequence(seq, 2), c); }, lstm.parameters(),
                                   o.epsilon),
             o);
       }},
      {"attention_pool",
       [](const GradCheckOptions& o) {
         Rng rng = make_rng(o.seed, 2);
         const nn::AttentionPool pool(
             nn::AttentionPoolSpec{nn::MlpSpec{3, {6}, 4}, nn::MlpSpec{4, {5}, 1}}, rng);
         jitter(pool.parameters(), rng);
         std::vector<Tensor> set;
         for (int i = 0; i < 4; ++i) set.push_back(Tensor::constant(random_matrix(2, 3, rng)));
         const Matrix c = random_matrix(2, 4, rng);
         return grad_result(
             nn::finite_diff_check([&] { return project(pool.forward(set, 2), c); }, pool.parameters(), o.epsilon),
             o);
       }},
      {"critic_infonce_attention",
       [](const GradCheckOptions& o) { return check_critic(o, "location_finding", critic::HistoryEncoder::Attention); }},
      {"critic_infonce_lstm",
       [](const GradCheckOptions& o) { return check_critic(o, "cartpole", critic::HistoryEncoder::Lstm); }},
      {"td3_q_loss",
       [](const GradCheckOptions& o) {
         auto f = td3_fixture(o);
         return grad_result(nn::finite_diff_check([&] { return rl::q_loss(f.agent->q, f.batch, f.targets); },
                                                  f.agent->q.parameters(), o.epsilon),
                            o);
       }},
      {"td3_policy_loss",
       [](const GradCheckOptions& o) {
         auto f = td3_fixture(o);
         const Tensor prev = Tensor::constant(f.batch.prev);
         const auto loss = [&] { return nn::scale(nn::mean(f.agent->q.q1(prev, f.agent->actor.forward(prev))), -1.0); };
         return grad_result(nn::finite_diff_check(loss, f.agent->actor.parameters(), o.epsilon), o);
       }},
  };
  return table;
}

// Adaptive two-step design rule for LinearGaussian checks: xi_1 = 1, then
// xi_t = clamp(1 + 0.5 y_{t-1}, 0.25, 3).
class AdaptivePolicy final : public env::DesignPolicy {
 public:
  [[nodiscard]] Vector act(const History& h, Rng&) const override {
    if (h.empty()) return Vector::Constant(1, 1.0);
    const double y = h.observation(h.length() - 1)[0];
    return Vector::Constant(1, std::clamp(1.0 + 0.5 * y, 0.25, 3.0));
  }
};

double log_mean_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().mean());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::vector<std::string> gradient_check_names() {
  std::vector<std::string> out;
  for (const auto& [name, fn] : grad_table()) out.push_back(name);
  return out;
}

CheckResult gradient_check(const std::string& name, const GradCheckOptions& options) {
  const auto& table = grad_table();
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown gradient check '" + name + "'");
  return timed("grad/" + name, [&] { return it->second(options); });
}

std::vector<CheckResult> gradient_checks(const GradCheckOptions& options) {
  std::vector<CheckResult> out;
  for (const auto& name : gradient_check_names()) out.push_back(gradient_check(name, options));
  return out;
}

CheckResult telescoping_check(int trajectories, std::uint64_t seed, double tolerance) {
  return timed("invariant/telescoping", [&] {
    Rng rng = make_rng(seed, 20);
    const auto model = sim::make_model("location_finding");
    const rl::RandomPolicy policy(model->bounds());
    const int T = 10, L = 15, per_critic = 50;
    double worst = 0.0, worst_sparse = 0.0;
    std::unique_ptr<critic::CriticNet> net;
    for (int i = 0; i < trajectories; ++i) {
      if (i % per_critic == 0) {
        auto cfg = small_critic(i / per_critic % 2 == 0 ? critic::HistoryEncoder::Attention
                                                        : critic::HistoryEncoder::Lstm);
        net = std::make_unique<critic::CriticNet>(*model, cfg, rng);
      }
      auto s = env::reset(*model, L, T, rng(), static_cast<std::uint64_t>(i));
      std::vector<History> path{s.history};
      for (int t = 0; t < T; ++t) {
        env::step(s, policy.act(s.history, rng), *model, nullptr);
        path.push_back(s.history);
      }
      const auto dense = est::dense_rewards(path, s.thetas, *net);
      const auto sparse = est::sparse_rewards(path, s.thetas, *net);
      double dsum = 0.0, ssum = 0.0;
      for (double r : dense) dsum += r;
      for (double r : sparse) ssum += r;
      const double g = est::g_score(s.history, s.thetas, *net);
      worst = std::max(worst, std::abs(dsum - g));
      worst_sparse = std::max(worst_sparse, std::abs(dsum - ssum));
    }
    CheckResult r;
    r.value = std::max(worst, worst_sparse);
    r.threshold = tolerance;
    r.passed = r.value < tolerance;
    std::ostringstream d;
    d << trajectories << " trajectories, max |sum dense - g(h_T)|=" << worst << ", max |dense - sparse total|="
      << worst_sparse;
    r.detail = d.str();
    return r;
  });
}

CheckResult sandwich_check(int num_contrastive, int rollouts, std::uint64_t seed) {
  return timed("invariant/sandwich", [&] {
    Rng rng = make_rng(seed, 21);
    sim::LinearGaussian model;
    const env::FixedDesignPolicy policy({Vector::Constant(1, 1.0)});
    std::vector<double> spce(rollouts), snmc(rollouts);
    std::vector<char> consistent(rollouts);
    est::for_each_rollout(model, policy, num_contrastive, 1, rollouts, rng, [&](const est::Rollout& ro, int i) {
      const Vector ll = model.log_likelihood_batch(ro.thetas.rows, ro.history);
      spce[i] = ll[0] - log_mean_exp(ll);
      snmc[i] = ll[0] - log_mean_exp(ll.tail(ll.size() - 1));
      const bool dominant = ll[0] >= log_mean_exp(ll.tail(ll.size() - 1));
      consistent[i] = static_cast<char>((snmc[i] >= spce[i]) == dominant);
    });
    const double eig = model.analytic_eig(1.0);
    const double ms = mean_of(spce), mn = mean_of(snmc), ss = se_of(spce), sn = se_of(snmc);
    const auto inconsistent = std::count(consistent.begin(), consistent.end(), 0);
    int below = 0;
    for (int i = 0; i < rollouts; ++i) below += spce[i] <= snmc[i] ? 1 : 0;
    CheckResult r;
    r.value = mn - ms;
    r.threshold = 0.0;
    r.passed = ms <= eig + 3 * ss && mn >= eig - 3 * sn && ms <= mn && inconsistent == 0;
    std::ostringstream d;
    d << "spce=" << ms << "+-" << ss << " snmc=" << mn << "+-" << sn << " eig=" << eig << " per-rollout spce<=snmc in "
      << below << "/" << rollouts << ", characterization mismatches=" << inconsistent;
    r.detail = d.str();
    return r;
  });
}

CheckResult optimal_critic_check(int num_contrastive, int rollouts, std::uint64_t seed, double tolerance) {
  return timed("invariant/optimal_critic", [&] {
    Rng rng = make_rng(seed, 22);
    const auto model = sim::make_model("location_finding");
    const rl::RandomPolicy policy(model->bounds());
    const auto batch = est::simulate_rollouts(*model, policy, num_contrastive, 10, rollouts, rng);
    const auto spce = est::spce_terms(*model, batch);
    const critic::OptimalCritic plain(*model);
    const critic::OptimalCritic shifted(*model, [](const History& h) {
      double s = 0.0;
      for (double v : h.raw()) s += std::sin(v);
      return 3.0 + s;
    });
    double worst = 0.0;
    for (const est::Critic* c : {static_cast<const est::Critic*>(&plain), static_cast<const est::Critic*>(&shifted)}) {
      const auto nce = est::infonce_terms(*c, batch);
      for (std::size_t i = 0; i < batch.size(); ++i) worst = std::max(worst, std::abs(nce[i] - spce[i]));
    }
    CheckResult r;
    r.value = worst;
    r.threshold = tolerance;
    r.passed = worst < tolerance;
    r.detail = std::to_string(rollouts) + " rollouts, L=" + std::to_string(num_contrastive) + ", c(h) in {0, 3+sum sin}";
    return r;
  });
}

CheckResult cap_check(int rollouts, std::uint64_t seed) {
  return timed("invariant/cap", [&] {
    Rng rng = make_rng(seed, 23);
    const auto model = sim::make_model("location_finding");
    const rl::RandomPolicy policy(model->bounds());
    const auto batch = est::simulate_rollouts(*model, policy, 1, 10, rollouts, rng);
    const auto spce = est::spce_terms(*model, batch);
    const critic::OptimalCritic opt(*model, [](const History& h) { return static_cast<double>(h.length()); });
    const auto nce = est::infonce_terms(opt, batch);
    double worst = -1e300;
    for (double v : spce) worst = std::max(worst, v);
    for (double v : nce) worst = std::max(worst, v);
    CheckResult r;
    r.value = worst;
    r.threshold = std::log(2.0);
    r.passed = worst <= r.threshold + 1e-12;
    r.detail = "max per-rollout sPCE/InfoNCE at L=1";
    return r;
  });
}

CheckResult decomposition_check(int outer, int inner, std::uint64_t seed) {
  return timed("invariant/decomposition", [&] {
    Rng rng = make_rng(seed, 24);
    sim::LinearGaussian model;
    const AdaptivePolicy policy;
    const auto d = est::marginal_eig_decomposition_check(model, policy, 2, outer, inner, rng);
    CheckResult r;
    r.value = std::abs(d.diff);
    r.threshold = 3.0 * d.combined_se();
    r.passed = r.value < r.threshold;
    std::ostringstream s;
    s << "total=" << d.lhs << "+-" << d.lhs_se << " sum of marginals=" << d.rhs << "+-" << d.rhs_se;
    r.detail = s.str();
    return r;
  });
}

CheckResult dense_marginal_check(int num_contrastive, int rollouts, int outer, int inner, std::uint64_t seed) {
  return timed("invariant/dense_marginal", [&] {
    Rng rng = make_rng(seed, 25);
    sim::LinearGaussian model;
    const AdaptivePolicy policy;
    const critic::OptimalCritic opt(model);
    const int T = 2;
    std::vector<std::vector<double>> dense(T, std::vector<double>(rollouts));
    est::for_each_rollout(model, policy, num_contrastive, T, rollouts, rng, [&](const est::Rollout& ro, int i) {
      std::vector<History> path;
      for (int t = 0; t <= T; ++t) path.push_back(ro.history.prefix(t));
      const auto r = est::dense_rewards(path, ro.thetas, opt);
      for (int t = 0; t < T; ++t) dense[t][i] = r[t];
    });
    Rng mc_rng = make_rng(seed, 26);
    const auto d = est::marginal_eig_decomposition_check(model, policy, T, outer, inner, mc_rng);
    CheckResult r;
    r.passed = true;
    std::ostringstream s;
    double worst_ratio = 0.0;
    for (int t = 0; t < T; ++t) {
      const double m = mean_of(dense[t]), se = se_of(dense[t]);
      const double comb = std::sqrt(se * se + d.marginal_se[t] * d.marginal_se[t]);
      const double diff = std::abs(m - d.marginals[t]);
      worst_ratio = std::max(worst_ratio, diff / comb);
      if (!(diff < 3.0 * comb)) r.passed = false;
      s << "t=" << t + 1 << ": dense=" << m << "+-" << se << " marginal=" << d.marginals[t] << "+-"
        << d.marginal_se[t] << "  ";
    }
    r.value = worst_ratio;
    r.threshold = 3.0;
    r.detail = s.str();
    return r;
  });
}

std::vector<CheckResult> invariant_checks(const InvariantOptions& o) {
  return {
      telescoping_check(o.telescoping_trajectories, o.seed),
      sandwich_check(o.sandwich_contrastive, o.sandwich_rollouts, o.seed),
      optimal_critic_check(o.optimal_contrastive, o.optimal_rollouts, o.seed),
      cap_check(o.cap_rollouts, o.seed),
      decomposition_check(o.decomposition_outer, o.decomposition_inner, o.seed),
      dense_marginal_check(o.dense_contrastive, o.dense_rollouts, o.decomposition_outer, o.decomposition_inner, o.seed),
  };
}

}  // namespace iboed::diag
