#include "iboed/critic/training.hpp"
#include "iboed/env/replay_buffer.hpp"
#include "iboed/env/trajectory.hpp"
#include "iboed/est/bounds.hpp"
#include "iboed/nn/optim.hpp"
#include "iboed/rl/td3.hpp"
#include "iboed/sim/models.hpp"

#include <benchmark/benchmark.h>

using namespace iboed;

namespace {

void BM_MlpForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(1);
  nn::Mlp mlp({20, {256, 256}, 1}, rng);
  const auto x = nn::Tensor::constant(Matrix::Random(batch, 20));
  for (auto _ : state) {
    const auto loss = nn::mean(nn::square(mlp.forward(x)));
    nn::backward(loss);
    benchmark::DoNotOptimize(loss.value()(0, 0));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(256);

void BM_AdamStep(benchmark::State& state) {
  Rng rng(2);
  nn::Mlp mlp({20, {256, 256}, 1}, rng);
  auto params = mlp.parameters();
  nn::AdamState adam({}, params);
  std::vector<Matrix> grads;
  for (const auto& p : params) grads.push_back(Matrix::Constant(p.value().rows(), p.value().cols(), 1e-3));
  for (auto _ : state) nn::adam_step(adam, params, grads);
}
BENCHMARK(BM_AdamStep);

void BM_SimulateStep(benchmark::State& state, const std::string& name) {
  const auto model = sim::make_model(name);
  Rng rng(3);
  const int T = 10;
  for (auto _ : state) {
    auto s = env::reset(*model, 1, T, rng);
    while (!s.done) env::step(s, model->bounds().lower, *model, nullptr);
    benchmark::DoNotOptimize(s.history.length());
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK_CAPTURE(BM_SimulateStep, location_finding, std::string("location_finding"));
BENCHMARK_CAPTURE(BM_SimulateStep, sir, std::string("sir"));

void BM_CartpoleStep(benchmark::State& state) {
  const auto model = sim::make_model("cartpole");
  Rng rng(4);
  for (auto _ : state) {
    auto s = env::reset(*model, 1, 5, rng);
    while (!s.done) env::step(s, model->bounds().lower, *model, nullptr);
    benchmark::DoNotOptimize(s.history.length());
  }
  state.SetItemsProcessed(state.iterations() * 5);
}
BENCHMARK(BM_CartpoleStep);

// sPCE on location finding, T = 10, per rollout.
void BM_SpceBound(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const auto model = sim::make_model("location_finding");
  const env::FixedDesignPolicy policy({Vector::Zero(2)});
  Rng rng(5);
  for (auto _ : state) {
    const auto e = est::spce_bound(*model, policy, L, 10, 16, rng);
    benchmark::DoNotOptimize(e.value);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_SpceBound)->Arg(255)->Arg(4095)->Unit(benchmark::kMillisecond);

void BM_CriticUpdate(benchmark::State& state, const std::string& name) {
  const auto model = sim::make_model(name);
  Rng rng(6);
  critic::CriticNet net(*model, {}, rng);
  nn::AdamState adam({}, net.parameters());
  const env::FixedDesignPolicy policy({model->bounds().lower});
  const auto batch = est::simulate_rollouts(*model, policy, 255, 10, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(critic::train_critic_batch(net, adam, batch));
}
BENCHMARK_CAPTURE(BM_CriticUpdate, attention, std::string("location_finding"))->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_CriticUpdate, lstm, std::string("sir"))->Unit(benchmark::kMillisecond);

void BM_Td3Update(benchmark::State& state) {
  const auto model = sim::make_model("location_finding");
  rl::TrainerConfig cfg;
  Rng rng(7);
  rl::Td3Agent agent(*model, cfg, rng);
  env::ReplayBuffer buffer(4096);
  for (int k = 0; k < 400; ++k) {
    auto s = env::reset(*model, 1, cfg.horizon, rng);
    while (!s.done) {
      const Vector xi = Vector::Random(2);
      env::step(s, xi, *model, nullptr);
      buffer.push({s.history, xi, 0.1, s.done, static_cast<std::uint64_t>(k)});
    }
  }
  std::int64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rl::td3_update(agent, buffer, cfg, ++step, rng).q_loss);
}
BENCHMARK(BM_Td3Update)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
