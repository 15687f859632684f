#include "iboed/nn/optim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace iboed;
using namespace iboed::nn;
using testutil::max_rel_error;
using testutil::numeric_gradient;
using testutil::random_matrix;

namespace {

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Contracts op(inputs) against a fixed random weight so every output entry matters.
struct OpCase {
  const char* name;
  std::vector<std::pair<int, int>> shapes;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
  double shift = 0.0;  // keeps log() inputs positive
};

std::vector<OpCase> op_cases() {
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto& x) { return matmul(x[0], x[1]); }},
      {"add", {{3, 2}, {3, 2}}, [](auto& x) { return add(x[0], x[1]); }},
      {"add_bias", {{3, 2}, {1, 2}}, [](auto& x) { return add_bias(x[0], x[1]); }},
      {"sub", {{3, 2}, {3, 2}}, [](auto& x) { return sub(x[0], x[1]); }},
      {"mul", {{3, 2}, {3, 2}}, [](auto& x) { return mul(x[0], x[1]); }},
      {"mul_col", {{3, 2}, {3, 1}}, [](auto& x) { return mul_col(x[0], x[1]); }},
      {"scale", {{3, 2}}, [](auto& x) { return scale(x[0], -1.7); }},
      {"add_scalar", {{3, 2}}, [](auto& x) { return add_scalar(x[0], 0.3); }},
      {"relu", {{4, 3}}, [](auto& x) { return relu(x[0]); }},
      {"tanh", {{4, 3}}, [](auto& x) { return tanh(x[0]); }},
      {"sigmoid", {{4, 3}}, [](auto& x) { return sigmoid(x[0]); }},
      {"exp", {{4, 3}}, [](auto& x) { return exp(x[0]); }},
      {"log", {{4, 3}}, [](auto& x) { return log(x[0]); }, 4.0},
      {"square", {{4, 3}}, [](auto& x) { return square(x[0]); }},
      {"sum", {{4, 3}}, [](auto& x) { return sum(x[0]); }},
      {"mean", {{4, 3}}, [](auto& x) { return mean(x[0]); }},
      {"row_sum", {{4, 3}}, [](auto& x) { return row_sum(x[0]); }},
      {"col_sum", {{4, 3}}, [](auto& x) { return col_sum(x[0]); }},
      {"concat_cols", {{3, 2}, {3, 1}}, [](auto& x) { return concat_cols(std::span<const Tensor>(x)); }},
      {"slice_cols", {{3, 4}}, [](auto& x) { return slice_cols(x[0], 1, 2); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [](auto& x) { return concat_rows(std::span<const Tensor>(x)); }},
      {"slice_rows", {{4, 3}}, [](auto& x) { return slice_rows(x[0], 1, 2); }},
      {"repeat_rows", {{2, 3}}, [](auto& x) { return repeat_rows(x[0], 3); }},
      {"reshape", {{2, 6}}, [](auto& x) { return reshape(x[0], 3, 4); }},
      {"logsumexp_rows", {{3, 5}}, [](auto& x) { return logsumexp_rows(x[0]); }},
      {"softmax_rows", {{3, 5}}, [](auto& x) { return softmax_rows(x[0]); }},
      {"transpose", {{3, 2}}, [](auto& x) { return transpose(x[0]); }},
      {"block_dot", {{2, 3}, {8, 3}}, [](auto& x) { return block_dot(x[0], x[1]); }},
  };
}

}  // namespace

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifference) {
  const auto& c = GetParam();
  Rng rng(42);
  std::vector<Tensor> inputs;
  for (auto [r, k] : c.shapes) {
    Matrix v = random_matrix(r, k, rng);
    if (c.shift > 0.0) v = v.array().abs() + c.shift;
    inputs.push_back(Tensor::parameter(v));
  }
  const Tensor probe = c.fn(inputs);
  const Matrix weight = random_matrix(probe.rows(), probe.cols(), rng);
  const auto loss = [&] { return sum(mul(c.fn(inputs), Tensor::constant(weight))); };

  backward(loss());
  for (auto& in : inputs) {
    const Matrix analytic = in.grad();
    const Matrix numeric = numeric_gradient([&] { return loss().item(); }, in.mutable_value());
    EXPECT_LT(max_rel_error(analytic, numeric, 1e-7), 1e-6) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(op_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Autodiff, SumOfSquaresGradientIsTwiceP) {
  Rng rng(1);
  Tensor p = Tensor::parameter(random_matrix(5, 1, rng));
  backward(sum(square(p)));
  EXPECT_LT((p.grad() - 2.0 * p.value()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, LogSumExpMatchesFiniteDifferences) {
  Rng rng(2);
  Tensor p = Tensor::parameter(random_matrix(1, 6, rng));
  const auto f = [&] { return sum(logsumexp_rows(p)); };
  backward(f());
  const Matrix numeric = numeric_gradient([&] { return f().item(); }, p.mutable_value());
  EXPECT_LT(max_rel_error(p.grad(), numeric), 1e-4);
  // d/dp logsumexp = softmax, summing to one
  EXPECT_NEAR(p.grad().sum(), 1.0, 1e-12);
}

TEST(Autodiff, ConstantRootGivesZeroGradients) {
  Rng rng(3);
  Tensor p = Tensor::parameter(random_matrix(2, 2, rng));
  Tensor c = Tensor::constant(random_matrix(2, 2, rng));
  backward(sum(square(c)));
  EXPECT_EQ(p.grad(), Matrix::Zero(2, 2));
}

TEST(Autodiff, NonScalarRootIsAContractError) {
  Tensor p = Tensor::parameter(Matrix::Ones(2, 2));
  EXPECT_THROW(backward(square(p)), ContractError);
}

TEST(Autodiff, SharedSubexpressionAccumulatesOnce) {
  Tensor x = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  Tensor y = mul(x, x);
  backward(sum(add(y, y)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 12.0);
}

TEST(Autodiff, ShapeMismatchIsADimensionError) {
  Tensor a = Tensor::parameter(Matrix::Ones(2, 3));
  Tensor b = Tensor::parameter(Matrix::Ones(2, 3));
  EXPECT_THROW((void)matmul(a, b), DimensionError);
  EXPECT_THROW((void)add(a, Tensor::constant(Matrix::Ones(3, 2))), DimensionError);
  EXPECT_THROW((void)block_dot(a, Tensor::constant(Matrix::Ones(5, 3))), DimensionError);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Tensor p = Tensor::parameter(Matrix::Ones(2, 2));
  {
    NoGradGuard guard;
    Tensor y = square(p);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(square(p).requires_grad());
}

TEST(Autodiff, InjectedFaultIsCaughtByTheChecker) {
  Rng rng(4);
  Tensor p = Tensor::parameter(random_matrix(3, 3, rng));
  const auto loss = [&] { return sum(tanh(p)); };
  EXPECT_LT(finite_diff_check(loss, {p}), 1e-6);
  nn::testing::set_backward_fault(Op::Tanh);
  const double broken = finite_diff_check(loss, {p});
  nn::testing::clear_backward_fault();
  EXPECT_GT(broken, 0.1);
}

TEST(Autodiff, OpNamesAreUnique) {
  std::set<std::string> names;
  for (int i = 0; i < kNumOps; ++i) names.insert(op_name(static_cast<Op>(i)));
  EXPECT_EQ(static_cast<int>(names.size()), kNumOps);
}

// ---------------------------------------------------------------------------

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  Mlp net = Mlp::zeros({4, {8, 8}, 3});
  Rng rng(5);
  EXPECT_EQ(net.predict(random_matrix(6, 4, rng)), Matrix::Zero(6, 3));
}

TEST(Mlp, IdentityLinearLayerIsIdentity) {
  Mlp net = Mlp::zeros({3, {}, 3});
  net.weight(0).mutable_value() = Matrix::Identity(3, 3);
  Rng rng(6);
  const Matrix x = random_matrix(4, 3, rng);
  EXPECT_EQ(net.predict(x), x);
}

TEST(Mlp, TwoThreeOneMatchesHandRolledMatmul) {
  Rng rng(7);
  Mlp net({2, {3}, 1}, rng);
  net.bias(0).mutable_value() = random_matrix(1, 3, rng);
  net.bias(1).mutable_value() = random_matrix(1, 1, rng);
  const Matrix& w0 = net.weight(0).value();
  const Matrix& b0 = net.bias(0).value();
  const Matrix& w1 = net.weight(1).value();
  const double x[2] = {1.0, 1.0};
  double out = net.bias(1).value()(0, 0);
  for (int j = 0; j < 3; ++j) {
    double h = b0(0, j);
    for (int i = 0; i < 2; ++i) h += x[i] * w0(i, j);
    out += std::max(h, 0.0) * w1(j, 0);
  }
  const Matrix in = Matrix::Ones(1, 2);
  EXPECT_NEAR(net.predict(in)(0, 0), out, 1e-12);
  EXPECT_NEAR(net.forward(Tensor::constant(in)).item(), out, 1e-12);
}

TEST(Mlp, WrongInputWidthIsADimensionError) {
  Rng rng(8);
  Mlp net({2, {3}, 1}, rng);
  EXPECT_THROW((void)net.predict(Matrix::Ones(1, 3)), DimensionError);
}

TEST(Mlp, CloneIsIndependent) {
  Rng rng(9);
  Mlp a({2, {3}, 1}, rng);
  Mlp b = a.clone();
  const Matrix x = random_matrix(2, 2, rng);
  EXPECT_EQ(a.predict(x), b.predict(x));
  b.weight(0).mutable_value().setZero();
  EXPECT_NE(a.predict(x), b.predict(x));
}

TEST(Mlp, InitializationIsSeedDeterministic) {
  Rng r1(10), r2(10);
  Mlp a({5, {16}, 2}, r1), b({5, {16}, 2}, r2);
  for (std::size_t i = 0; i < a.num_layers(); ++i) EXPECT_EQ(a.weight(i).value(), b.weight(i).value());
  // fan-in bound sqrt(6 / 5) for the hidden layer
  EXPECT_LE(a.weight(0).value().cwiseAbs().maxCoeff(), std::sqrt(6.0 / 5.0));
}

// ---------------------------------------------------------------------------

TEST(Lstm, EmptySequenceIsZeroState) {
  Rng rng(11);
  Lstm lstm({3, 5}, rng);
  const Tensor h = lstm.forward_sequence({}, 2);
  EXPECT_EQ(h.value(), Matrix::Zero(2, 5));
}

TEST(Lstm, SingleStepMatchesHandUnrolledGates) {
  Rng rng(12);
  const int D = 3, H = 4;
  Lstm lstm({D, H}, rng);
  lstm.gate_bias().mutable_value() = random_matrix(1, 4 * H, rng);
  const Matrix x = random_matrix(1, D, rng);
  const Matrix& wi = lstm.input_weights().value();
  const Matrix& b = lstm.gate_bias().value();

  Matrix expected(1, H);
  for (int j = 0; j < H; ++j) {
    double z[4];
    for (int g = 0; g < 4; ++g) {
      z[g] = b(0, g * H + j);
      for (int i = 0; i < D; ++i) z[g] += x(0, i) * wi(i, g * H + j);
      // the initial hidden state is zero, so the recurrent weights do not contribute
    }
    const double c = sigmoid_d(z[0]) * std::tanh(z[2]);
    expected(0, j) = sigmoid_d(z[3]) * std::tanh(c);
  }
  const std::vector<Tensor> seq{Tensor::constant(x)};
  EXPECT_LT((lstm.forward_sequence(seq).value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lstm, TwoStepsMatchHandUnrolledRecurrence) {
  Rng rng(13);
  const int D = 2, H = 3;
  Lstm lstm({D, H}, rng);
  const Matrix x1 = random_matrix(1, D, rng), x2 = random_matrix(1, D, rng);
  const Matrix& wi = lstm.input_weights().value();
  const Matrix& wh = lstm.hidden_weights().value();
  const Matrix& b = lstm.gate_bias().value();

  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H), c = Eigen::RowVectorXd::Zero(H);
  for (const Matrix* x : {&x1, &x2}) {
    Eigen::RowVectorXd nh(H), nc(H);
    for (int j = 0; j < H; ++j) {
      double z[4];
      for (int g = 0; g < 4; ++g) {
        z[g] = b(0, g * H + j);
        for (int i = 0; i < D; ++i) z[g] += (*x)(0, i) * wi(i, g * H + j);
        for (int i = 0; i < H; ++i) z[g] += h(i) * wh(i, g * H + j);
      }
      nc(j) = sigmoid_d(z[1]) * c(j) + sigmoid_d(z[0]) * std::tanh(z[2]);
      nh(j) = sigmoid_d(z[3]) * std::tanh(nc(j));
    }
    h = nh;
    c = nc;
  }
  const std::vector<Tensor> seq{Tensor::constant(x1), Tensor::constant(x2)};
  const auto prefixes = lstm.forward_prefixes(seq);
  ASSERT_EQ(prefixes.size(), 2U);
  EXPECT_LT((prefixes[1].value() - Matrix(h)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(prefixes[1].value(), lstm.forward_sequence(seq).value());
}

TEST(Lstm, GradientWrtFirstInputMatchesFiniteDifferences) {
  Rng rng(14);
  Lstm lstm({3, 4}, rng);
  std::vector<Tensor> seq{Tensor::parameter(random_matrix(1, 3, rng)), Tensor::constant(random_matrix(1, 3, rng)),
                          Tensor::constant(random_matrix(1, 3, rng))};
  const auto f = [&] { return sum(lstm.forward_sequence(seq)); };
  backward(f());
  const Matrix numeric = numeric_gradient([&] { return f().item(); }, seq[0].mutable_value());
  EXPECT_LT(max_rel_error(seq[0].grad(), numeric), 1e-4);
}

TEST(Lstm, MixedElementDimsIsADimensionError) {
  Rng rng(15);
  Lstm lstm({3, 4}, rng);
  const std::vector<Tensor> seq{Tensor::constant(Matrix::Ones(1, 3)), Tensor::constant(Matrix::Ones(1, 2))};
  EXPECT_THROW((void)lstm.forward_sequence(seq), DimensionError);
}

// ---------------------------------------------------------------------------

namespace {

AttentionPool make_pool(Rng& rng) {
  AttentionPool pool({{2, {6}, 4, Activation::Tanh}, {4, {5}, 1, Activation::Tanh}}, rng);
  for (auto p : pool.parameters()) p.mutable_value() += 0.1 * random_matrix(p.rows(), p.cols(), rng);
  return pool;
}

}  // namespace

TEST(AttentionPool, EmptySetIsZero) {
  Rng rng(16);
  auto pool = make_pool(rng);
  EXPECT_EQ(pool.forward({}, 3).value(), Matrix::Zero(3, 4));
}

TEST(AttentionPool, ReversedSetGivesIdenticalOutput) {
  Rng rng(17);
  auto pool = make_pool(rng);
  std::vector<Tensor> set;
  for (int i = 0; i < 3; ++i) set.push_back(Tensor::constant(random_matrix(2, 2, rng)));
  std::vector<Tensor> rev(set.rbegin(), set.rend());
  EXPECT_LT((pool.forward(set).value() - pool.forward(rev).value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AttentionPool, TwoElementsMatchExplicitWeightedSum) {
  Rng rng(18);
  auto pool = make_pool(rng);
  const Matrix x1 = random_matrix(1, 2, rng), x2 = random_matrix(1, 2, rng);
  const Matrix e1 = pool.encoder().predict(x1), e2 = pool.encoder().predict(x2);
  const double a1 = pool.attention().predict(e1)(0, 0), a2 = pool.attention().predict(e2)(0, 0);
  const double w1 = std::exp(a1) / (std::exp(a1) + std::exp(a2));
  const double w2 = 1.0 - w1;
  const Matrix expected = 2.0 * (w1 * e1 + w2 * e2);
  const std::vector<Tensor> set{Tensor::constant(x1), Tensor::constant(x2)};
  EXPECT_LT((pool.forward(set).value() - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(AttentionPool, UniformAttentionIsSumPooling) {
  Rng rng(19);
  auto pool = make_pool(rng);
  for (auto p : pool.attention().parameters()) p.mutable_value().setZero();
  const Matrix x1 = random_matrix(1, 2, rng), x2 = random_matrix(1, 2, rng), x3 = random_matrix(1, 2, rng);
  const Matrix expected = pool.encoder().predict(x1) + pool.encoder().predict(x2) + pool.encoder().predict(x3);
  const std::vector<Tensor> set{Tensor::constant(x1), Tensor::constant(x2), Tensor::constant(x3)};
  EXPECT_LT((pool.forward(set).value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AttentionPool, PrefixesAgreeWithSeparateCalls) {
  Rng rng(20);
  auto pool = make_pool(rng);
  std::vector<Tensor> set;
  for (int i = 0; i < 4; ++i) set.push_back(Tensor::constant(random_matrix(3, 2, rng)));
  const auto prefixes = pool.forward_prefixes(set);
  for (std::size_t k = 1; k <= set.size(); ++k) {
    const Matrix direct = pool.forward(std::span<const Tensor>(set.data(), k)).value();
    EXPECT_LT((prefixes[k - 1].value() - direct).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AttentionPool, MixedDimsIsADimensionError) {
  Rng rng(21);
  auto pool = make_pool(rng);
  const std::vector<Tensor> set{Tensor::constant(Matrix::Ones(1, 2)), Tensor::constant(Matrix::Ones(1, 3))};
  EXPECT_THROW((void)pool.forward(set), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterList p{Tensor::parameter(Matrix::Constant(2, 2, 0.7))};
  AdamState s(AdamConfig{0.1}, p);
  adam_step(s, p, {Matrix::Zero(2, 2)});
  EXPECT_EQ(p[0].value(), Matrix::Constant(2, 2, 0.7));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterList p{Tensor::parameter(Matrix::Zero(1, 1))};
  AdamState s(AdamConfig{0.1}, p);
  adam_step(s, p, {Matrix::Ones(1, 1)});
  EXPECT_NEAR(p[0].value()(0, 0), -0.1, 1e-8);
}

TEST(Adam, TwoStepsMatchScalarAlgebra) {
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  ParameterList p{Tensor::parameter(Matrix::Constant(1, 1, 1.0))};
  AdamState s(cfg, p);
  double x = 1.0, m = 0.0, v = 0.0;
  const double grads[2] = {0.3, -1.2};
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1];
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    x -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    adam_step(s, p, {Matrix::Constant(1, 1, g)});
  }
  EXPECT_NEAR(p[0].value()(0, 0), x, 1e-15);
  EXPECT_EQ(s.step, 2);
}

TEST(Adam, RepeatedRunsAreIdentical) {
  const auto run = [] {
    Rng rng(22);
    ParameterList p{Tensor::parameter(random_matrix(3, 2, rng))};
    AdamState s(AdamConfig{}, p);
    for (int k = 0; k < 5; ++k) adam_step(s, p, {random_matrix(3, 2, rng)});
    return p[0].value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchIsADimensionError) {
  ParameterList p{Tensor::parameter(Matrix::Zero(2, 2))};
  AdamState s(AdamConfig{}, p);
  EXPECT_THROW(adam_step(s, p, {Matrix::Zero(2, 3)}), DimensionError);
}

TEST(SoftUpdate, TauOneCopiesAndTauZeroKeeps) {
  ParameterList target{Tensor::parameter(Matrix::Zero(2, 2))};
  ParameterList source{Tensor::parameter(Matrix::Ones(2, 2))};
  soft_update(target, source, 0.0);
  EXPECT_EQ(target[0].value(), Matrix::Zero(2, 2));
  soft_update(target, source, 1.0);
  EXPECT_EQ(target[0].value(), Matrix::Ones(2, 2));
}

TEST(SoftUpdate, SmallTauBlendsLinearly) {
  ParameterList target{Tensor::parameter(Matrix::Zero(1, 1))};
  ParameterList source{Tensor::parameter(Matrix::Ones(1, 1))};
  soft_update(target, source, 0.005);
  EXPECT_DOUBLE_EQ(target[0].value()(0, 0), 0.005);
}

TEST(SoftUpdate, ShapeMismatchIsADimensionError) {
  ParameterList target{Tensor::parameter(Matrix::Zero(1, 2))};
  ParameterList source{Tensor::parameter(Matrix::Ones(2, 1))};
  EXPECT_THROW(soft_update(target, source, 0.5), DimensionError);
}

TEST(FiniteDiffCheck, QuadraticIsNearlyExact) {
  Rng rng(23);
  Tensor p = Tensor::parameter(random_matrix(4, 1, rng));
  const Matrix a = random_matrix(4, 4, rng);
  const Matrix spd = a * a.transpose() + Matrix::Identity(4, 4);
  const auto loss = [&] { return sum(mul(p, matmul(Tensor::constant(spd), p))); };
  EXPECT_LT(finite_diff_check(loss, {p}), 1e-8);
}

TEST(FiniteDiffCheck, MlpLstmCompositeIsAccurate) {
  Rng rng(24);
  Lstm lstm({2, 5}, rng);
  Mlp head({5, {6}, 1, Activation::Tanh}, rng);
  std::vector<Tensor> seq;
  for (int t = 0; t < 3; ++t) seq.push_back(Tensor::constant(random_matrix(2, 2, rng)));
  ParameterList params = lstm.parameters();
  append(params, head.parameters());
  const auto loss = [&] { return mean(square(head.forward(lstm.forward_sequence(seq)))); };
  EXPECT_LT(finite_diff_check(loss, params), 1e-4);
}

TEST(FiniteDiffCheck, NonDeterministicLossIsAContractError) {
  Tensor p = Tensor::parameter(Matrix::Ones(1, 1));
  int calls = 0;
  const auto loss = [&] { return add_scalar(sum(p), static_cast<double>(calls++)); };
  EXPECT_THROW((void)finite_diff_check(loss, {p}), ContractError);
}
