#include "iboed/critic/critic_net.hpp"

#include "iboed/nn/optim.hpp"

#include <stdexcept>

namespace iboed::critic {

using nn::Tensor;

const char* to_string(HistoryEncoder kind) {
  switch (kind) {
    case HistoryEncoder::Auto: return "auto";
    case HistoryEncoder::Attention: return "attention";
    case HistoryEncoder::Lstm: return "lstm";
  }
  return "?";
}

HistoryEncoder parse_history_encoder(const std::string& text) {
  if (text == "auto") return HistoryEncoder::Auto;
  if (text == "attention") return HistoryEncoder::Attention;
  if (text == "lstm") return HistoryEncoder::Lstm;
  throw std::invalid_argument("history encoder must be auto, attention or lstm; got '" + text + "'");
}

namespace {

nn::Mlp make_theta_net(const CriticConfig& cfg, int theta_dim, Rng& rng) {
  return nn::Mlp(nn::MlpSpec{theta_dim, cfg.theta_hidden, cfg.embed_dim}, rng);
}

}  // namespace

CriticNet::CriticNet(const sim::Model& model, CriticConfig config, Rng& rng)
    : config_(std::move(config)),
      kind_(config_.encoder),
      design_dim_(model.design_dim()),
      obs_dim_(model.obs_dim()),
      theta_dim_(model.theta_dim()),
      scaling_(model.scaling()),
      theta_net_(nn::Mlp::zeros(nn::MlpSpec{1, {}, 1})),
      calls_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  if (config_.embed_dim <= 0) throw DimensionError("critic embed_dim must be positive");
  if (kind_ == HistoryEncoder::Auto) {
    kind_ = model.conditionally_independent() ? HistoryEncoder::Attention : HistoryEncoder::Lstm;
  }
  const int pair_dim = design_dim_ + obs_dim_;
  if (kind_ == HistoryEncoder::Attention) {
    nn::AttentionPoolSpec spec;
    spec.encoder = nn::MlpSpec{pair_dim, config_.pair_hidden, config_.embed_dim};
    spec.attention = nn::MlpSpec{config_.embed_dim, config_.attention_hidden, 1};
    pool_.emplace(std::move(spec), rng);
  } else {
    lstm_.emplace(nn::LstmSpec{pair_dim, config_.lstm_hidden}, rng);
    lstm_head_.emplace(nn::MlpSpec{config_.lstm_hidden, {}, config_.embed_dim}, rng);
  }
  theta_net_ = make_theta_net(config_, theta_dim_, rng);
}

CriticNet::CriticNet(const CriticNet& other, int)
    : config_(other.config_),
      kind_(other.kind_),
      design_dim_(other.design_dim_),
      obs_dim_(other.obs_dim_),
      theta_dim_(other.theta_dim_),
      scaling_(other.scaling_),
      theta_net_(other.theta_net_.clone()),
      calls_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  if (other.pool_) pool_.emplace(other.pool_->clone());
  if (other.lstm_) lstm_.emplace(other.lstm_->clone());
  if (other.lstm_head_) lstm_head_.emplace(other.lstm_head_->clone());
}

CriticNet::CriticNet(CriticNet&&) noexcept = default;
CriticNet& CriticNet::operator=(CriticNet&&) noexcept = default;

CriticNet CriticNet::clone() const { return CriticNet(*this, 0); }

std::vector<Tensor> CriticNet::pair_inputs(std::span<const History> histories) const {
  const auto batch = static_cast<Eigen::Index>(histories.size());
  const int n = histories.front().length();
  for (const auto& h : histories) {
    if (h.design_dim() != design_dim_ || h.obs_dim() != obs_dim_) {
      throw DimensionError("critic: history pair dims (" + std::to_string(h.design_dim()) + ", " +
                           std::to_string(h.obs_dim()) + ") do not match model (" + std::to_string(design_dim_) +
                           ", " + std::to_string(obs_dim_) + ")");
    }
    if (h.length() != n) throw DimensionError("critic: batched histories must share one length");
  }
  const RowVector dc = scaling_.design_center.transpose(), ds = scaling_.design_scale.transpose();
  const RowVector oc = scaling_.obs_center.transpose(), os = scaling_.obs_scale.transpose();
  std::vector<Tensor> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    Matrix x(batch, design_dim_ + obs_dim_);
    for (Eigen::Index b = 0; b < batch; ++b) {
      x.row(b).head(design_dim_) = (histories[b].design(t).transpose() - dc).cwiseQuotient(ds);
      x.row(b).tail(obs_dim_) = (histories[b].observation(t).transpose() - oc).cwiseQuotient(os);
    }
    out.push_back(Tensor::constant(std::move(x)));
  }
  return out;
}

Tensor CriticNet::encode_empty(Eigen::Index batch) const {
  if (pool_) return Tensor::constant(Matrix::Zero(batch, config_.embed_dim));
  return lstm_head_->forward(Tensor::constant(Matrix::Zero(batch, config_.lstm_hidden)));
}

Tensor CriticNet::encode_histories(std::span<const History> histories) const {
  if (histories.empty()) throw DimensionError("critic: no histories to encode");
  const auto batch = static_cast<Eigen::Index>(histories.size());
  auto inputs = pair_inputs(histories);
  if (inputs.empty()) return encode_empty(batch);
  if (pool_) return pool_->forward(inputs, batch);
  return lstm_head_->forward(lstm_->forward_sequence(inputs, batch));
}

std::vector<Tensor> CriticNet::encode_prefixes(std::span<const History> histories) const {
  if (histories.empty()) throw DimensionError("critic: no histories to encode");
  auto inputs = pair_inputs(histories);
  if (pool_) return pool_->forward_prefixes(inputs);
  std::vector<Tensor> out;
  for (const auto& h : lstm_->forward_prefixes(inputs)) out.push_back(lstm_head_->forward(h));
  return out;
}

Tensor CriticNet::encode_thetas(const Matrix& thetas) const {
  if (thetas.cols() != theta_dim_) {
    throw DimensionError("critic: theta has " + std::to_string(thetas.cols()) + " columns, expected " +
                         std::to_string(theta_dim_));
  }
  Matrix x = (thetas.rowwise() - scaling_.theta_center.transpose()).array().rowwise() /
             scaling_.theta_scale.transpose().array();
  return theta_net_.forward(Tensor::constant(std::move(x)));
}

Matrix CriticNet::embed_histories(std::span<const History> histories) const {
  nn::NoGradGuard guard;
  count_call();
  return encode_histories(histories).value();
}

Matrix CriticNet::embed_thetas(const Matrix& thetas) const {
  nn::NoGradGuard guard;
  count_call();
  return encode_thetas(thetas).value();
}

Vector CriticNet::scores(const History& history, const Matrix& thetas) const {
  nn::NoGradGuard guard;
  count_call();
  const Matrix eh = encode_histories(std::span<const History>(&history, 1)).value();
  const Matrix et = encode_thetas(thetas).value();
  return et * eh.row(0).transpose();
}

nn::ParameterList CriticNet::parameters() const {
  nn::ParameterList out;
  if (pool_) nn::append(out, pool_->parameters());
  if (lstm_) nn::append(out, lstm_->parameters());
  if (lstm_head_) nn::append(out, lstm_head_->parameters());
  nn::append(out, theta_net_.parameters());
  return out;
}

void target_sync(const CriticNet& critic, CriticNet& target, double tau) {
  nn::soft_update(target.parameters(), critic.parameters(), tau);
}

OptimalCritic::OptimalCritic(const sim::Model& model, HistoryFn c) : model_(model), c_(std::move(c)) {
  if (!model_.has_likelihood()) {
    throw UnsupportedCapability("optimal critic needs an analytic likelihood; " + model_.name() + " has none");
  }
}

Vector OptimalCritic::scores(const History& history, const Matrix& thetas) const {
  Vector s = model_.log_likelihood_batch(thetas, history);
  if (c_) s.array() += c_(history);
  return s;
}

}  // namespace iboed::critic
