#include "iboed/rl/networks.hpp"

#include <random>

namespace iboed::rl {

using nn::Tensor;

InputScaler::InputScaler(const sim::Model& model, int horizon) {
  const auto s = model.scaling();
  const int dx = model.design_dim(), dy = model.obs_dim();
  history_scale_ = Vector::Ones(iboed::encoded_dim(dx, dy, horizon));
  for (int t = 0; t < horizon; ++t) {
    const int off = t * (dx + dy);
    history_scale_.segment(off, dx) = s.design_scale.cwiseInverse();
    history_scale_.segment(off + dx, dy) = s.obs_scale.cwiseInverse();
  }
  design_center_ = model.bounds().center().transpose();
  design_inv_half_ = model.bounds().half_width().cwiseInverse().transpose();
}

Vector InputScaler::encode(const History& history) const {
  const Vector raw = encode_history_concat(history);
  if (raw.size() != history_scale_.size()) {
    throw DimensionError("policy input: encoded history has " + std::to_string(raw.size()) + " entries, expected " +
                         std::to_string(history_scale_.size()));
  }
  return raw.cwiseProduct(history_scale_);
}

Matrix InputScaler::encode(std::span<const History> histories) const {
  Matrix out(static_cast<Eigen::Index>(histories.size()), history_scale_.size());
  for (std::size_t i = 0; i < histories.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encode(histories[i]);
  return out;
}

Matrix InputScaler::scale_designs(const Matrix& designs) const {
  return (designs.rowwise() - design_center_).array().rowwise() * design_inv_half_.array();
}

// ---------------------------------------------------------------------------

PolicyNet::PolicyNet(const sim::Model& model, int horizon, const std::vector<int>& hidden, Rng& rng)
    : scaler_(model, horizon),
      bounds_(model.bounds()),
      net_(nn::MlpSpec{scaler_.encoded_dim(), hidden, model.design_dim(), nn::Activation::Relu, nn::Activation::Tanh},
           rng) {}

PolicyNet PolicyNet::clone() const { return PolicyNet(scaler_, bounds_, net_.clone()); }

Tensor PolicyNet::forward(const Tensor& encoded) const {
  const Eigen::Index n = encoded.rows();
  Matrix half = bounds_.half_width().transpose().replicate(n, 1);
  Matrix center = bounds_.center().transpose().replicate(n, 1);
  return add(mul(net_.forward(encoded), Tensor::constant(std::move(half))), Tensor::constant(std::move(center)));
}

Matrix PolicyNet::predict(const Matrix& encoded) const {
  Matrix out = net_.predict(encoded);
  out = out.array().rowwise() * bounds_.half_width().transpose().array();
  out.rowwise() += bounds_.center().transpose();
  return out;
}

Vector PolicyNet::act(const History& history) const {
  return predict(scaler_.encode(history).transpose()).row(0).transpose();
}

// ---------------------------------------------------------------------------

namespace {

nn::MlpSpec q_spec(const sim::Model& model, int horizon, const std::vector<int>& hidden) {
  return nn::MlpSpec{encoded_dim(model.design_dim(), model.obs_dim(), horizon) + model.design_dim(), hidden, 1};
}

}  // namespace

TwinQ::TwinQ(const sim::Model& model, int horizon, const std::vector<int>& hidden, Rng& rng)
    : design_center_(model.bounds().center().transpose()),
      design_inv_half_(model.bounds().half_width().cwiseInverse().transpose()),
      q1_(q_spec(model, horizon, hidden), rng),
      q2_(q_spec(model, horizon, hidden), rng) {}

TwinQ TwinQ::clone() const { return TwinQ(design_center_, design_inv_half_, q1_.clone(), q2_.clone()); }

Tensor TwinQ::input(const Tensor& encoded, const Tensor& designs) const {
  const Eigen::Index n = designs.rows();
  Matrix center = design_center_.replicate(n, 1);
  Matrix inv = design_inv_half_.replicate(n, 1);
  Tensor scaled = mul(sub(designs, Tensor::constant(std::move(center))), Tensor::constant(std::move(inv)));
  const Tensor parts[] = {encoded, scaled};
  return concat_cols(parts);
}

Tensor TwinQ::q1(const Tensor& encoded, const Tensor& designs) const { return q1_.forward(input(encoded, designs)); }
Tensor TwinQ::q2(const Tensor& encoded, const Tensor& designs) const { return q2_.forward(input(encoded, designs)); }

nn::ParameterList TwinQ::parameters() const {
  auto out = q1_.parameters();
  nn::append(out, q2_.parameters());
  return out;
}

// ---------------------------------------------------------------------------

Vector NetworkPolicy::act(const History& history, Rng&) const { return net_.act(history); }

Matrix NetworkPolicy::act_batch(std::span<const History> histories, Rng&) const {
  return net_.predict(net_.scaler().encode(histories));
}

Vector RandomPolicy::act(const History&, Rng& rng) const {
  Vector x(bounds_.lower.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = std::uniform_real_distribution<double>(bounds_.lower[i], bounds_.upper[i])(rng);
  }
  return x;
}

Matrix select_actions(const PolicyNet& policy, std::span<const History> histories, double noise, Rng& rng) {
  if (noise < 0.0) throw ContractError("exploration noise must be >= 0");
  Matrix a = policy.predict(policy.scaler().encode(histories));
  if (noise > 0.0) {
    std::normal_distribution<double> normal(0.0, noise);
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) += normal(rng);
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) a.row(r) = policy.bounds().clamp(a.row(r).transpose()).transpose();
  return a;
}

Vector select_action(const PolicyNet& policy, const History& history, double noise, Rng& rng) {
  return select_actions(policy, std::span<const History>(&history, 1), noise, rng).row(0).transpose();
}

}  // namespace iboed::rl
