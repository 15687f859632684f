#include "iboed/est/rewards.hpp"
#include "iboed/rl/trainer.hpp"
#include "iboed/sim/models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace iboed;
using rl::TrainerConfig;

namespace {

TrainerConfig tiny(est::RewardKind reward) {
  TrainerConfig c;
  c.hidden = {16};
  c.horizon = 3;
  c.parallel_envs = 8;
  c.num_contrastive = 15;
  c.batch_size = 16;
  c.updates_per_timestep = 1;
  c.initial_random_timesteps = 24;
  c.total_timesteps = 96;
  c.reward = reward;
  c.critic.embed_dim = 8;
  c.critic.pair_hidden = {16};
  c.critic.attention_hidden = {8};
  c.critic.lstm_hidden = 8;
  c.critic.theta_hidden = {16};
  c.critic_updates_per_iteration = 2;
  c.critic_batch_size = 4;
  c.eval_every = 48;
  c.eval_rollouts = 8;
  c.eval_contrastive = 31;
  c.seed = 5;
  c.record_wall_clock = false;
  return c;
}

// Stored rewards plus g(h_1) .. g(h_T) scored by the reward critic while it
// still has the parameters that produced them.
struct Scored {
  std::vector<double> rewards;
  std::vector<double> g;
};

std::vector<Scored> collect(const sim::Model& model, const TrainerConfig& cfg) {
  rl::Trainer trainer(model, cfg);
  std::vector<Scored> out;
  trainer.set_hooks({[&](const rl::CompletedTrajectory& t) {
                       Scored s{t.rewards, {}};
                       for (std::size_t k = 1; k < t.histories.size(); ++k) {
                         s.g.push_back(est::g_score(t.histories[k], t.thetas, *t.reward_critic));
                       }
                       out.push_back(std::move(s));
                     },
                     nullptr});
  trainer.run();
  return out;
}

double discounted(const std::vector<double>& r, double gamma) {
  double s = 0.0, w = 1.0;
  for (double x : r) {
    s += w * x;
    w *= gamma;
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Trainer, DenseRewardsTelescopeToTheFinalScore) {
  for (const std::string name : {"location_finding", "sir", "cartpole"}) {
    const auto model = sim::make_model(name);
    auto cfg = tiny(est::RewardKind::Dense);
    if (!model->has_likelihood()) cfg.eval_bound = est::BoundKind::InfoNce;
    const auto trajs = collect(*model, cfg);
    ASSERT_EQ(trajs.size(), 32u) << name;
    for (const auto& t : trajs) {
      ASSERT_EQ(t.rewards.size(), 3u);
      double sum = 0.0;
      for (double r : t.rewards) sum += r;
      EXPECT_NEAR(sum, t.g.back(), 1e-9) << name;
      // Each stored reward is the increment of g between consecutive prefixes.
      double prev = 0.0;
      for (std::size_t k = 0; k < t.rewards.size(); ++k) {
        EXPECT_NEAR(t.rewards[k], t.g[k] - prev, 1e-12);
        prev = t.g[k];
      }
    }
  }
}

TEST(Trainer, SparseRewardsAreZeroBeforeTheLastStep) {
  const auto model = sim::make_model("location_finding");
  const auto trajs = collect(*model, tiny(est::RewardKind::Sparse));
  ASSERT_FALSE(trajs.empty());
  for (const auto& t : trajs) {
    EXPECT_EQ(t.rewards[0], 0.0);
    EXPECT_EQ(t.rewards[1], 0.0);
    EXPECT_NEAR(t.rewards[2], t.g.back(), 1e-12);
  }
}

// With gamma = 1 the dense and sparse returns coincide; with gamma < 1 they
// generally differ, which is why the identity is only checked undiscounted.
TEST(Trainer, UndiscountedDenseAndSparseReturnsAgree) {
  const auto model = sim::make_model("location_finding");
  const auto trajs = collect(*model, tiny(est::RewardKind::Dense));
  int differ = 0;
  for (const auto& t : trajs) {
    const std::vector<double>& dense = t.rewards;
    std::vector<double> sparse(dense.size(), 0.0);
    sparse.back() = t.g.back();
    EXPECT_NEAR(discounted(dense, 1.0), discounted(sparse, 1.0), 1e-9);
    if (std::abs(discounted(dense, 0.99) - discounted(sparse, 0.99)) > 1e-6) ++differ;
  }
  EXPECT_GT(differ, 0);
}

TEST(Trainer, SameSeedGivesIdenticalRuns) {
  const auto model = sim::make_model("location_finding");
  const auto cfg = tiny(est::RewardKind::Dense);
  rl::Trainer a(*model, cfg), b(*model, cfg);
  a.run();
  b.run();
  ASSERT_EQ(a.metrics().size(), b.metrics().size());
  ASSERT_GE(a.metrics().size(), 2u);
  for (std::size_t i = 0; i < a.metrics().size(); ++i) {
    EXPECT_EQ(a.metrics()[i].step, b.metrics()[i].step);
    EXPECT_EQ(a.metrics()[i].q_loss, b.metrics()[i].q_loss);
    EXPECT_EQ(a.metrics()[i].critic_loss, b.metrics()[i].critic_loss);
    EXPECT_EQ(a.metrics()[i].eval_bound, b.metrics()[i].eval_bound);
    EXPECT_EQ(a.metrics()[i].wall_clock, 0.0);
  }
  const auto pa = a.agent().actor.parameters();
  const auto pb = b.agent().actor.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k].value(), pb[k].value());
}

TEST(Trainer, DifferentSeedsDiverge) {
  const auto model = sim::make_model("location_finding");
  auto cfg = tiny(est::RewardKind::Dense);
  rl::Trainer a(*model, cfg);
  cfg.seed = 6;
  rl::Trainer b(*model, cfg);
  a.run();
  b.run();
  EXPECT_NE(a.metrics().back().q_loss, b.metrics().back().q_loss);
}

TEST(Trainer, RespectsTheStepBudgetAndEvalCadence) {
  const auto model = sim::make_model("location_finding");
  rl::Trainer t(*model, tiny(est::RewardKind::Dense));
  t.run();
  EXPECT_EQ(t.env_steps(), 96);
  EXPECT_EQ(t.iterations(), 4);
  ASSERT_EQ(t.metrics().size(), 2u);
  EXPECT_EQ(t.metrics()[0].step, 48);
  EXPECT_EQ(t.metrics()[1].step, 96);
  for (const auto& m : t.metrics()) {
    EXPECT_TRUE(std::isfinite(m.eval_bound));
    EXPECT_GT(m.eval_stderr, 0.0);
    EXPECT_LE(m.eval_bound, std::log(32.0) + 1e-12);
  }
  EXPECT_FALSE(t.iterate());
  // TD3 starts once the random phase's steps are in the buffer, so every
  // iteration runs T * updates_per_timestep updates.
  EXPECT_EQ(t.agent().updates, 4 * 3);
}

TEST(Trainer, FinalIterationShrinksToStayWithinTheBudget) {
  const auto model = sim::make_model("location_finding");
  auto cfg = tiny(est::RewardKind::Dense);
  cfg.total_timesteps = 100;
  rl::Trainer t(*model, cfg);
  t.run();
  // Four full iterations of 8 x 3 steps, then one trajectory fits in the last 4.
  EXPECT_EQ(t.env_steps(), 99);
  EXPECT_EQ(t.iterations(), 5);
  EXPECT_EQ(t.metrics().back().step, 99);
  EXPECT_EQ(t.buffer().size(), 99u);
}

TEST(Trainer, BufferHoldsEveryTransition) {
  const auto model = sim::make_model("location_finding");
  rl::Trainer t(*model, tiny(est::RewardKind::Dense));
  t.run();
  ASSERT_EQ(t.buffer().size(), 96u);
  int terminal = 0;
  for (std::size_t i = 0; i < t.buffer().size(); ++i) {
    const auto& tr = t.buffer().at(i);
    EXPECT_EQ(tr.done, tr.next_history.full());
    terminal += tr.done ? 1 : 0;
  }
  EXPECT_EQ(terminal, 32);
}

TEST(Trainer, LikelihoodFreeModelsTrainWithInfoNceEvaluation) {
  const auto model = sim::make_model("sir");
  auto cfg = tiny(est::RewardKind::Dense);
  cfg.eval_bound = est::BoundKind::InfoNce;
  rl::Trainer t(*model, cfg);
  t.run();
  EXPECT_TRUE(std::isfinite(t.metrics().back().eval_bound));

  cfg.eval_bound = est::BoundKind::Spce;
  rl::Trainer bad(*model, cfg);
  EXPECT_THROW(bad.run(), UnsupportedCapability);
}

TEST(EvaluatePolicy, CapabilityAndCriticErrors) {
  const auto sir = sim::make_model("sir");
  const rl::RandomPolicy random(sir->bounds());
  Rng rng(1);
  EXPECT_THROW(rl::evaluate_policy(random, *sir, nullptr, est::BoundKind::Spce, 7, 2, 4, rng), UnsupportedCapability);
  EXPECT_THROW(rl::evaluate_policy(random, *sir, nullptr, est::BoundKind::Snmc, 7, 2, 4, rng), UnsupportedCapability);
  EXPECT_THROW(rl::evaluate_policy(random, *sir, nullptr, est::BoundKind::InfoNce, 7, 2, 4, rng), ContractError);
}

TEST(EvaluatePolicy, RandomLocationFindingBaselineIsSensible) {
  const auto model = sim::make_model("location_finding");
  const rl::RandomPolicy random(model->bounds());
  Rng rng(2);
  const auto e = rl::evaluate_policy(random, *model, nullptr, est::BoundKind::Spce, 4095, 10, 64, rng);
  EXPECT_GT(e.value, 1.0);
  EXPECT_LT(e.value, std::log(4096.0) - 1.0);
  EXPECT_GT(e.std_error, 0.0);
}

TEST(TrainerConfig, ValidateNamesTheOffendingKey) {
  const auto expect_key = [](TrainerConfig c, const std::string& key) {
    try {
      c.validate();
      ADD_FAILURE() << "accepted invalid " << key;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  TrainerConfig c;
  EXPECT_NO_THROW(c.validate());
  auto g = c;
  g.gamma = 1.5;
  expect_key(g, "gamma");
  g = c;
  g.tau = -0.1;
  expect_key(g, "tau");
  g = c;
  g.hidden = {};
  expect_key(g, "hidden");
  g = c;
  g.critic_batch_size = 1;
  expect_key(g, "critic_batch_size");
  g = c;
  g.horizon = 0;
  expect_key(g, "horizon");

  const auto model = sim::make_model("linear_gaussian");
  g = c;
  g.gamma = 1.5;
  EXPECT_THROW(rl::Trainer(*model, g), std::invalid_argument);
}
