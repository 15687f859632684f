#include "iboed/env/replay_buffer.hpp"
#include "iboed/env/trajectory.hpp"
#include "iboed/est/rewards.hpp"
#include "iboed/rl/td3.hpp"
#include "iboed/sim/models.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <type_traits>

using namespace iboed;
using sim::ThetaBatch;

TEST(SamplePrior, NeedsGroundTruthAndOneContrastive) {
  sim::LocationFinding lf;
  Rng rng(1);
  EXPECT_THROW((void)sim::sample_prior(lf, 1, rng), ContractError);
  const auto batch = sim::sample_prior(lf, 2, rng);
  EXPECT_EQ(batch.size(), 2);
  EXPECT_EQ(batch.num_contrastive(), 1);
}

TEST(SamplePrior, LocationFindingIsStandardNormal) {
  sim::LocationFinding lf;
  Rng rng(2);
  const int n = 100000;
  const auto batch = sim::sample_prior(lf, n, rng);
  const Vector mean = batch.rows.colwise().mean().transpose();
  const Vector var = (batch.rows.rowwise() - mean.transpose()).array().square().colwise().sum() / (n - 1);
  const double se = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    EXPECT_LT(std::abs(mean[j]), 3.0 * se);
    EXPECT_NEAR(var[j], 1.0, 0.02);
  }
}

TEST(SamplePrior, CartpoleStaysInItsBox) {
  sim::Cartpole cp;
  Rng rng(3);
  const auto batch = sim::sample_prior(cp, 20000, rng);
  EXPECT_GE(batch.rows.col(0).minCoeff(), 0.0);
  EXPECT_LE(batch.rows.col(0).maxCoeff(), 0.2);
  EXPECT_GE(batch.rows.col(1).minCoeff(), 0.5);
  EXPECT_LE(batch.rows.col(1).maxCoeff(), 1.5);
}

TEST(SamplePrior, SirIsLogNormal) {
  sim::Sir sir;
  Rng rng(4);
  const auto batch = sim::sample_prior(sir, 50000, rng);
  EXPECT_GT(batch.rows.minCoeff(), 0.0);
  const Vector log_mean = batch.rows.array().log().colwise().mean().transpose();
  EXPECT_NEAR(log_mean[0], std::log(0.5), 0.01);
  EXPECT_NEAR(log_mean[1], std::log(0.1), 0.01);
}

// ---------------------------------------------------------------------------

TEST(LocationFinding, NoiselessObservationIsTheClosedFormIntensity) {
  sim::LocationFindingConfig cfg;
  cfg.noise = 1e-300;
  sim::LocationFinding lf(cfg);
  const double d = 0.7;
  Vector xi(2);
  xi << 0.3, -1.1;
  Vector theta(4);
  theta << xi[0] + d, xi[1], xi[0], xi[1] - d;
  Rng rng(5);
  const Vector y = lf.simulate(theta, xi, History(2, 1, 1), rng);
  EXPECT_NEAR(y[0], std::log(cfg.background + 2.0 * cfg.alpha / (cfg.max_signal + d * d)), 1e-12);
}

TEST(LocationFinding, LogLikelihoodIsAdditiveAndMatchesTheGaussianFormula) {
  sim::LocationFinding lf;
  Rng rng(6);
  const Vector theta = lf.sample_prior(rng);
  History h(2, 1, 2);
  Vector xi1(2), xi2(2);
  xi1 << 0.5, 1.0;
  xi2 << -2.0, 0.1;
  h.append(xi1, lf.simulate(theta, xi1, h, rng));
  h.append(xi2, lf.simulate(theta, xi2, h, rng));

  const auto gauss = [&](const Vector& d, double y) {
    const double z = (y - std::log(lf.intensity(theta, d))) / lf.config().noise;
    return -0.5 * z * z - std::log(lf.config().noise) - 0.5 * std::log(2.0 * std::numbers::pi);
  };
  const double expected = gauss(xi1, h.observation(0)[0]) + gauss(xi2, h.observation(1)[0]);
  EXPECT_NEAR(lf.log_likelihood(theta, h), expected, 1e-12);
  EXPECT_NEAR(lf.log_likelihood_step(theta, xi1, h.observation(0)) + lf.log_likelihood_step(theta, xi2, h.observation(1)),
              expected, 1e-12);

  Matrix thetas(3, 4);
  thetas.row(0) = theta.transpose();
  thetas.row(1) = lf.sample_prior(rng).transpose();
  thetas.row(2) = lf.sample_prior(rng).transpose();
  const Vector batch = lf.log_likelihood_batch(thetas, h);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(batch[i], lf.log_likelihood(thetas.row(i).transpose(), h), 1e-10);
}

TEST(LocationFinding, EmptyHistoryHasZeroLogLikelihood) {
  sim::LocationFinding lf;
  EXPECT_EQ(lf.log_likelihood(Vector::Zero(4), History(2, 1, 3)), 0.0);
}

TEST(LocationFinding, OutOfBoundsDesignIsClampedAndCounted) {
  sim::LocationFinding lf;
  Vector theta = Vector::Zero(4);
  Vector outside(2), clamped(2);
  outside << 9.0, -0.5;
  clamped << 4.0, -0.5;
  Rng r1(7), r2(7);
  const auto before = lf.clamp_count();
  const Vector a = lf.simulate(theta, outside, History(2, 1, 1), r1);
  const Vector b = lf.simulate(theta, clamped, History(2, 1, 1), r2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(lf.clamp_count(), before + 1);
}

TEST(LocationFinding, WrongSizesAreDimensionErrors) {
  sim::LocationFinding lf;
  Rng rng(8);
  EXPECT_THROW((void)lf.simulate(Vector::Zero(3), Vector::Zero(2), History(2, 1, 1), rng), DimensionError);
  EXPECT_THROW((void)lf.simulate(Vector::Zero(4), Vector::Zero(1), History(2, 1, 1), rng), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(LinearGaussian, LogLikelihoodAtTheOrigin) {
  sim::LinearGaussian lg;
  EXPECT_NEAR(lg.log_likelihood_step(Vector::Zero(1), Vector::Ones(1), Vector::Zero(1)), -0.9189385332046727, 1e-15);
}

TEST(LinearGaussian, AnalyticInformationGain) {
  sim::LinearGaussian lg;
  EXPECT_EQ(lg.analytic_eig(0.0), 0.0);
  EXPECT_NEAR(lg.analytic_eig(1.0), 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(lg.analytic_eig(3.0), 0.5 * std::log(10.0), 1e-15);
  EXPECT_NEAR(lg.analytic_eig(std::vector<double>{1.0, 2.0}), 0.5 * std::log(6.0), 1e-15);
}

TEST(LinearGaussian, ConjugatePosteriorMatchesPrecisionAlgebra) {
  sim::LinearGaussianConfig cfg{2.0, 0.5, 5.0};
  sim::LinearGaussian lg(cfg);
  History h(1, 1, 3);
  const double xs[3] = {1.0, -2.0, 0.5}, ys[3] = {0.3, -1.7, 0.2};
  double precision = 1.0 / cfg.prior_var, shift = 0.0;
  for (int t = 0; t < 3; ++t) {
    h.append(Vector::Constant(1, xs[t]), Vector::Constant(1, ys[t]));
    precision += xs[t] * xs[t] / cfg.noise_var;
    shift += xs[t] * ys[t] / cfg.noise_var;
  }
  const auto [mean, var] = lg.posterior(h);
  EXPECT_NEAR(var, 1.0 / precision, 1e-15);
  EXPECT_NEAR(mean, shift / precision, 1e-15);
}

TEST(LinearGaussian, SimulationMatchesItsMoments) {
  sim::LinearGaussian lg;
  Rng rng(9);
  const Vector theta = Vector::Constant(1, 0.8);
  const Vector xi = Vector::Constant(1, 2.0);
  const int n = 40000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = lg.simulate(theta, xi, History(1, 1, 1), rng)[0];
    s += y;
    s2 += y * y;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 1.6, 4.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.03);
}

// ---------------------------------------------------------------------------

TEST(Sir, NoInitialInfectionStaysAtZero) {
  sim::SirConfig cfg;
  cfg.initial_infected = 0.0;
  cfg.obs_noise = 0.0;
  sim::Sir sir(cfg);
  Rng rng(10);
  const Vector theta = sir.sample_prior(rng);
  auto latent = sir.begin_trajectory(theta, rng);
  History h(1, 1, 4);
  for (double kappa : {1.0, 20.0, 55.5, 99.0}) {
    const Vector y = sir.simulate(theta, Vector::Constant(1, kappa), h, rng, latent.get());
    EXPECT_EQ(y[0], 0.0);
    h.append(Vector::Constant(1, kappa), y);
  }
}

TEST(Sir, PathConservesPopulation) {
  sim::Sir sir;
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const auto path = sir.simulate_path(sir.sample_prior(rng), rng);
    for (std::size_t i = 0; i < path.infected.size(); ++i) {
      EXPECT_GE(path.susceptible[i], 0.0);
      EXPECT_GE(path.infected[i], 0.0);
      EXPECT_GE(path.recovered[i], 0.0);
      EXPECT_NEAR(path.susceptible[i] + path.infected[i] + path.recovered[i], sir.config().population, 1e-9);
    }
  }
}

TEST(Sir, MeasurementsWithinATrajectoryShareOnePath) {
  sim::SirConfig cfg;
  cfg.obs_noise = 0.0;
  sim::Sir sir(cfg);
  Vector theta(2);
  theta << 0.924, 0.073;
  Rng rng(12);
  auto latent = sir.begin_trajectory(theta, rng);
  const Vector kappa = Vector::Constant(1, 12.0);
  History h(1, 1, 2);
  const Vector y1 = sir.simulate(theta, kappa, h, rng, latent.get());
  h.append(kappa, y1);
  const Vector y2 = sir.simulate(theta, kappa, h, rng, latent.get());
  EXPECT_EQ(y1, y2);
  EXPECT_FALSE(sir.conditionally_independent());
}

TEST(Sir, HasNoLikelihood) {
  sim::Sir sir;
  EXPECT_FALSE(sir.has_likelihood());
  History h(1, 1, 1);
  h.append(Vector::Constant(1, 5.0), Vector::Constant(1, 3.0));
  EXPECT_THROW((void)sir.log_likelihood(Vector::Constant(2, 0.3), h), UnsupportedCapability);
}

// ---------------------------------------------------------------------------

TEST(Cartpole, UprightAtRestIsAnEquilibrium) {
  sim::Cartpole cp;
  Vector theta(2);
  theta << 0.1, 1.0;
  const sim::CartpoleState rest{};
  const auto next = cp.step(rest, theta, 0.0);
  EXPECT_EQ(next.x, 0.0);
  EXPECT_EQ(next.x_dot, 0.0);
  EXPECT_EQ(next.angle, 0.0);
  EXPECT_EQ(next.angle_dot, 0.0);
}

TEST(Cartpole, FrictionlessEnergyIsNearlyConserved) {
  sim::Cartpole cp;
  Vector theta(2);
  theta << 0.0, 1.0;
  auto s = cp.initial_state();
  const double e0 = cp.energy(s, theta);
  for (int k = 0; k < 5; ++k) s = cp.step(s, theta, 0.0);
  EXPECT_NEAR(cp.energy(s, theta), e0, 1e-7 * std::abs(e0));
}

TEST(Cartpole, FrictionDissipatesEnergy) {
  sim::Cartpole cp;
  Vector theta(2);
  theta << 0.2, 1.0;
  auto s = cp.initial_state();
  const double e0 = cp.energy(s, theta);
  for (int k = 0; k < 5; ++k) s = cp.step(s, theta, 0.0);
  EXPECT_LT(cp.energy(s, theta), e0);
}

TEST(Cartpole, ObservationIsDeterministicInHistoryAndDesign) {
  sim::Cartpole cp;
  Vector theta(2);
  theta << 0.037, 1.02;
  History h(1, 3, 3);
  Rng r1(13), r2(99);
  h.append(Vector::Constant(1, 1.5), cp.simulate(theta, Vector::Constant(1, 1.5), h, r1));
  const Vector a = cp.simulate(theta, Vector::Constant(1, -2.0), h, r1);
  const Vector b = cp.simulate(theta, Vector::Constant(1, -2.0), h, r2);
  EXPECT_EQ(a, b);
  EXPECT_THROW((void)cp.log_likelihood_step(theta, Vector::Zero(1), a), UnsupportedCapability);
}

// ---------------------------------------------------------------------------

TEST(Registry, BuildsEveryModelAndRejectsUnknowns) {
  for (const auto& name : sim::registered_models()) EXPECT_EQ(sim::make_model(name)->name(), name);
  EXPECT_THROW((void)sim::make_model("nope"), std::invalid_argument);
  EXPECT_THROW((void)sim::make_model("location_finding", {{"bogus", 1.0}}), std::invalid_argument);
  EXPECT_THROW((void)sim::make_model("location_finding", {{"dim", 2.5}}), std::invalid_argument);
  const auto lf = sim::make_model("location_finding", {{"dim", 3.0}, {"sources", 1.0}});
  EXPECT_EQ(lf->design_dim(), 3);
  EXPECT_EQ(lf->theta_dim(), 3);
}

// ---------------------------------------------------------------------------

TEST(History, EncodesEmptyAsZeros) {
  const Vector e = encode_history_concat(History(1, 1, 2));
  EXPECT_EQ(e, Vector::Zero(5));
}

TEST(History, EncodesOnePairWithTheStepFraction) {
  History h(1, 1, 2);
  h.append(Vector::Constant(1, 0.5), Vector::Constant(1, 1.2));
  Vector expected(5);
  expected << 0.5, 1.2, 0.0, 0.0, 0.5;
  EXPECT_EQ(encode_history_concat(h), expected);
}

TEST(History, FullHistoryHasNoPadding) {
  History h(1, 2, 2);
  h.append(Vector::Constant(1, 1.0), Vector::Constant(2, 2.0));
  h.append(Vector::Constant(1, 3.0), Vector::Constant(2, 4.0));
  Vector expected(7);
  expected << 1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 1.0;
  EXPECT_EQ(encode_history_concat(h), expected);
  EXPECT_EQ(encoded_dim(1, 2, 2), 7);
}

TEST(History, AppendContracts) {
  History h(1, 1, 1);
  EXPECT_THROW(h.append(Vector::Zero(2), Vector::Zero(1)), DimensionError);
  h.append(Vector::Zero(1), Vector::Zero(1));
  EXPECT_TRUE(h.full());
  EXPECT_THROW(h.append(Vector::Zero(1), Vector::Zero(1)), ContractError);
}

TEST(History, PrefixAndExtension) {
  History h(2, 1, 3);
  Rng rng(14);
  for (int t = 0; t < 3; ++t) h.append(testutil::random_matrix(2, 1, rng), testutil::random_matrix(1, 1, rng));
  const History p = h.prefix(2);
  EXPECT_EQ(p.length(), 2);
  EXPECT_EQ(p.capacity(), 3);
  EXPECT_TRUE(h.extends_by_one(p));
  EXPECT_FALSE(h.extends_by_one(h.prefix(1)));
  EXPECT_EQ(Vector(p.pair(1)), Vector(h.pair(1)));
}

// ---------------------------------------------------------------------------

TEST(Trajectory, ResetIsEmptyAndSeedDeterministic) {
  sim::LocationFinding lf;
  const auto a = env::reset(lf, 7, 10, 123);
  const auto b = env::reset(lf, 7, 10, 123);
  EXPECT_EQ(a.history.length(), 0);
  EXPECT_EQ(a.thetas.rows, b.thetas.rows);
  EXPECT_EQ(a.thetas.size(), 8);
  EXPECT_EQ(encode_history_concat(a.history), Vector::Zero(encoded_dim(2, 1, 10)));
  EXPECT_THROW((void)env::reset(lf, 0, 10, 1), ContractError);
}

TEST(Trajectory, FinishesAfterTStepsAndRefusesMore) {
  sim::LocationFinding lf;
  auto s = env::reset(lf, 3, 4, 5);
  for (int t = 0; t < 4; ++t) {
    EXPECT_FALSE(s.done);
    const auto r = env::step(s, Vector::Zero(2), lf, nullptr);
    EXPECT_EQ(r.done, t == 3);
  }
  EXPECT_THROW((void)env::step(s, Vector::Zero(2), lf, nullptr), ContractError);
}

// Replaying from a rebuilt state at any intermediate history reproduces the
// observation and the reward of the original transition.
TEST(Trajectory, TransitionsAreMarkovInHistoryAndParameters) {
  for (const std::string name : {"location_finding", "sir", "cartpole"}) {
    const auto model = sim::make_model(name);
    const int T = 6;
    const est::FunctionCritic critic([](const History& h, const Vector& th) {
      double s = 0.0;
      for (double v : h.raw()) s += std::sin(v);
      return s * th.sum();
    });
    const auto reward = est::make_reward_fn(est::RewardKind::Dense, critic);
    Rng design_rng(15);
    auto original = env::reset(*model, 5, T, 77);
    std::vector<History> seen{original.history};
    std::vector<Vector> designs;
    std::vector<double> rewards;
    std::vector<Vector> observations;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (!original.done) {
      Vector xi = model->bounds().lower;
      for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] += u(design_rng) * (model->bounds().upper[j] - xi[j]);
      const auto r = env::step(original, xi, *model, reward);
      designs.push_back(xi);
      rewards.push_back(r.reward);
      observations.push_back(r.observation);
      seen.push_back(original.history);
    }
    for (int t = 0; t < T; ++t) {
      auto replay = env::TrajectoryState::at(*model, seen[t], original.thetas, original.seed);
      const auto r = env::step(replay, designs[t], *model, reward);
      EXPECT_EQ(r.observation, observations[t]) << name << " t=" << t;
      EXPECT_EQ(r.reward, rewards[t]) << name << " t=" << t;
      EXPECT_EQ(replay.history, seen[t + 1]) << name << " t=" << t;
    }
  }
}

TEST(Trajectory, RolloutAtUsesTheGivenGroundTruth) {
  sim::LinearGaussianConfig cfg;
  cfg.noise_var = 1e-300;
  sim::LinearGaussian lg(cfg);
  env::FixedDesignPolicy policy({Vector::Constant(1, 2.0)});
  Rng rng(16);
  const History h = env::rollout_at(lg, policy, Vector::Constant(1, 0.25), 3, 9, rng);
  ASSERT_EQ(h.length(), 3);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(h.observation(t)[0], 0.5, 1e-12);
  EXPECT_THROW((void)env::rollout_at(lg, policy, Vector::Zero(2), 3, 9, rng), DimensionError);
}

// ---------------------------------------------------------------------------

// Policy and Q inputs are built from histories alone. The transition record
// has exactly these five fields, none of them a parameter.
TEST(Observability, TransitionCarriesNoParameters) {
  env::Transition t;
  auto& [next_history, design, reward, done, trajectory_id] = t;
  static_assert(std::is_same_v<std::remove_cvref_t<decltype(next_history)>, History>);
  static_assert(std::is_same_v<std::remove_cvref_t<decltype(design)>, Vector>);
  static_assert(std::is_same_v<std::remove_cvref_t<decltype(reward)>, double>);
  static_assert(std::is_same_v<std::remove_cvref_t<decltype(done)>, bool>);
  static_assert(std::is_same_v<std::remove_cvref_t<decltype(trajectory_id)>, std::uint64_t>);
  static_assert(std::is_same_v<decltype(&env::DesignPolicy::act), Vector (env::DesignPolicy::*)(const History&, Rng&) const>);
  static_assert(std::is_same_v<decltype(&rl::PolicyNet::act), Vector (rl::PolicyNet::*)(const History&) const>);
  static_assert(std::is_same_v<decltype(&rl::make_batch),
                               rl::TransitionBatch (*)(const rl::InputScaler&, std::span<const env::Transition>)>);
  SUCCEED();
}

TEST(Observability, NetworkInputWidthsExcludeParameters) {
  for (const std::string name : {"location_finding", "sir", "cartpole"}) {
    const auto model = sim::make_model(name);
    const int T = 5;
    Rng rng(17);
    rl::PolicyNet policy(*model, T, {8}, rng);
    rl::TwinQ q(*model, T, {8}, rng);
    const int width = encoded_dim(model->design_dim(), model->obs_dim(), T);
    EXPECT_EQ(policy.scaler().encoded_dim(), width);
    EXPECT_EQ(policy.net().spec().input_dim, width);
    EXPECT_EQ(q.net1().spec().input_dim, width + model->design_dim());
    EXPECT_EQ(q.net2().spec().input_dim, width + model->design_dim());
  }
}

TEST(Observability, SwappingHiddenParametersChangesNoNetworkInput) {
  sim::LocationFinding lf;
  const int T = 4;
  Rng rng(18);
  rl::PolicyNet policy(lf, T, {16}, rng);
  auto a = env::reset(lf, 3, T, 1);
  for (int t = 0; t < 2; ++t) env::step(a, Vector::Constant(2, 0.5 * t), lf, nullptr);
  auto b = env::TrajectoryState::at(lf, a.history, sim::sample_prior(lf, 4, rng), 999);
  ASSERT_NE(a.thetas.rows, b.thetas.rows);
  EXPECT_EQ(policy.act(a.history), policy.act(b.history));
  const env::Transition ta{a.history, Vector::Constant(2, 0.5), 0.0, false, 0};
  const env::Transition tb{b.history, Vector::Constant(2, 0.5), 0.0, false, 1};
  const auto ba = rl::make_batch(policy.scaler(), std::span<const env::Transition>(&ta, 1));
  const auto bb = rl::make_batch(policy.scaler(), std::span<const env::Transition>(&tb, 1));
  EXPECT_EQ(ba.prev, bb.prev);
  EXPECT_EQ(ba.next, bb.next);
}

// ---------------------------------------------------------------------------

namespace {

env::Transition tagged(std::uint64_t id) {
  History h(1, 1, 1);
  h.append(Vector::Constant(1, static_cast<double>(id)), Vector::Zero(1));
  return env::Transition{h, Vector::Constant(1, static_cast<double>(id)), 0.0, true, id};
}

}  // namespace

TEST(ReplayBuffer, EvictsTheOldestWhenFull) {
  env::ReplayBuffer buf(4);
  for (std::uint64_t i = 0; i < 5; ++i) buf.push(tagged(i));
  EXPECT_EQ(buf.size(), 4U);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(buf.at(i).trajectory_id, i + 1);
}

TEST(ReplayBuffer, EmptySampleIsAContractError) {
  env::ReplayBuffer buf(4);
  Rng rng(19);
  EXPECT_THROW((void)buf.sample(1, rng), ContractError);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  env::ReplayBuffer buf(10);
  for (std::uint64_t i = 0; i < 10; ++i) buf.push(tagged(i));
  Rng rng(20);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (auto idx : buf.sample_indices(n, rng)) ++counts[idx];
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(n), 0.1, 0.01);
}

TEST(ReplayBuffer, StoresTransitionsVerbatim) {
  env::ReplayBuffer buf(3);
  const auto t = tagged(7);
  buf.push(t);
  Rng rng(21);
  EXPECT_EQ(buf.sample(1, rng).front(), t);
  EXPECT_EQ(t.prev_history().length(), 0);
}
