#include "iboed/nn/layers.hpp"

#include <cmath>

namespace iboed::nn {

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Tensor clone_tensor(const Tensor& t) { return Tensor::parameter(t.value()); }

}  // namespace

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

Matrix activate(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Tanh: return x.array().tanh();
    case Activation::Sigmoid: return (1.0 + (-x.array()).exp()).inverse();
  }
  return x;
}

void zero_grad(const ParameterList& params) {
  for (auto p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.input_dim <= 0 || spec_.output_dim <= 0) throw DimensionError("Mlp: dimensions must be positive");
  int fan_in = spec_.input_dim;
  const std::size_t n_layers = spec_.hidden_dims.size() + 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const bool last = i + 1 == n_layers;
    const int fan_out = last ? spec_.output_dim : spec_.hidden_dims[i];
    if (fan_out <= 0) throw DimensionError("Mlp: hidden width must be positive");
    const double bound = last ? std::sqrt(1.0 / fan_in) : std::sqrt(6.0 / fan_in);
    weights_.push_back(Tensor::parameter(uniform(fan_in, fan_out, bound, rng)));
    biases_.push_back(Tensor::parameter(Matrix::Zero(1, fan_out)));
    fan_in = fan_out;
  }
}

Mlp Mlp::zeros(MlpSpec spec) {
  Mlp m(std::move(spec));
  int fan_in = m.spec_.input_dim;
  const std::size_t n_layers = m.spec_.hidden_dims.size() + 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const int fan_out = i + 1 == n_layers ? m.spec_.output_dim : m.spec_.hidden_dims[i];
    m.weights_.push_back(Tensor::parameter(Matrix::Zero(fan_in, fan_out)));
    m.biases_.push_back(Tensor::parameter(Matrix::Zero(1, fan_out)));
    fan_in = fan_out;
  }
  return m;
}

Mlp Mlp::clone() const {
  Mlp m(spec_);
  for (const auto& w : weights_) m.weights_.push_back(clone_tensor(w));
  for (const auto& b : biases_) m.biases_.push_back(clone_tensor(b));
  return m;
}

void Mlp::check_input(Eigen::Index cols) const {
  if (cols != spec_.input_dim) {
    throw DimensionError("Mlp: input has " + std::to_string(cols) + " columns, expected " +
                         std::to_string(spec_.input_dim));
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  check_input(x.cols());
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = add_bias(matmul(h, weights_[i]), biases_[i]);
    h = activate(h, i + 1 == weights_.size() ? spec_.output_activation : spec_.hidden_activation);
  }
  return h;
}

Matrix Mlp::predict(const Matrix& x) const {
  check_input(x.cols());
  Matrix h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Matrix z = h * weights_[i].value();
    z.rowwise() += biases_[i].value().row(0);
    h = activate(z, i + 1 == weights_.size() ? spec_.output_activation : spec_.hidden_activation);
  }
  return h;
}

ParameterList Mlp::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lstm

Lstm::Lstm(LstmSpec spec, Rng& rng) : spec_(spec) {
  if (spec_.input_dim <= 0 || spec_.hidden_dim <= 0) throw DimensionError("Lstm: dimensions must be positive");
  const int h4 = 4 * spec_.hidden_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.hidden_dim));
  w_input_ = Tensor::parameter(uniform(spec_.input_dim, h4, bound, rng));
  w_hidden_ = Tensor::parameter(uniform(spec_.hidden_dim, h4, bound, rng));
  Matrix b = Matrix::Zero(1, h4);
  b.middleCols(spec_.hidden_dim, spec_.hidden_dim).setOnes();  // forget gate starts open
  bias_ = Tensor::parameter(std::move(b));
}

Lstm Lstm::zeros(LstmSpec spec) {
  Lstm l(spec);
  const int h4 = 4 * spec.hidden_dim;
  l.w_input_ = Tensor::parameter(Matrix::Zero(spec.input_dim, h4));
  l.w_hidden_ = Tensor::parameter(Matrix::Zero(spec.hidden_dim, h4));
  l.bias_ = Tensor::parameter(Matrix::Zero(1, h4));
  return l;
}

Lstm Lstm::clone() const {
  Lstm l(spec_);
  l.w_input_ = clone_tensor(w_input_);
  l.w_hidden_ = clone_tensor(w_hidden_);
  l.bias_ = clone_tensor(bias_);
  return l;
}

void Lstm::check_sequence(std::span<const Tensor> sequence) const {
  for (const auto& x : sequence) {
    if (x.cols() != spec_.input_dim) {
      throw DimensionError("Lstm: element has " + std::to_string(x.cols()) + " columns, expected " +
                           std::to_string(spec_.input_dim));
    }
    if (x.rows() != sequence.front().rows()) throw DimensionError("Lstm: batch size differs across steps");
  }
}

std::vector<Tensor> Lstm::forward_prefixes(std::span<const Tensor> sequence) const {
  check_sequence(sequence);
  std::vector<Tensor> out;
  if (sequence.empty()) return out;
  const auto batch = sequence.front().rows();
  const auto H = spec_.hidden_dim;
  Tensor h = Tensor::constant(Matrix::Zero(batch, H));
  Tensor c = Tensor::constant(Matrix::Zero(batch, H));
  for (const auto& x : sequence) {
    Tensor z = add_bias(add(matmul(x, w_input_), matmul(h, w_hidden_)), bias_);
    Tensor i = sigmoid(slice_cols(z, 0, H));
    Tensor f = sigmoid(slice_cols(z, H, H));
    Tensor g = tanh(slice_cols(z, 2 * H, H));
    Tensor o = sigmoid(slice_cols(z, 3 * H, H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    out.push_back(h);
  }
  return out;
}

Tensor Lstm::forward_sequence(std::span<const Tensor> sequence, Eigen::Index batch) const {
  if (sequence.empty()) return Tensor::constant(Matrix::Zero(batch, spec_.hidden_dim));
  return forward_prefixes(sequence).back();
}

// ---------------------------------------------------------------------------
// AttentionPool

AttentionPool::AttentionPool(AttentionPoolSpec spec, Rng& rng)
    : encoder_(std::move(spec.encoder), rng), attention_(std::move(spec.attention), rng) {
  if (attention_.spec().input_dim != encoder_.spec().output_dim || attention_.spec().output_dim != 1) {
    throw DimensionError("AttentionPool: attention head must map the embedding to a scalar");
  }
}

AttentionPool AttentionPool::clone() const { return AttentionPool(encoder_.clone(), attention_.clone()); }

Tensor AttentionPool::forward(std::span<const Tensor> set, Eigen::Index batch) const {
  if (set.empty()) return Tensor::constant(Matrix::Zero(batch, encoder_.spec().output_dim));
  return forward_prefixes(set).back();
}

std::vector<Tensor> AttentionPool::forward_prefixes(std::span<const Tensor> set) const {
  std::vector<Tensor> out;
  if (set.empty()) return out;
  for (const auto& x : set) {
    if (x.cols() != encoder_.spec().input_dim) {
      throw DimensionError("AttentionPool: element has " + std::to_string(x.cols()) + " columns, expected " +
                           std::to_string(encoder_.spec().input_dim));
    }
    if (x.rows() != set.front().rows()) throw DimensionError("AttentionPool: batch size differs across elements");
  }
  // Stack elements so the encoder and attention head run once over n*batch rows.
  const auto n = static_cast<Eigen::Index>(set.size());
  const auto rows = set.front().rows();
  Tensor stacked = concat_rows(set);
  Tensor emb = encoder_.forward(stacked);
  Tensor logits = attention_.forward(emb);  // (n*rows) x 1, element-major
  std::vector<Tensor> logit_cols, emb_rows;
  logit_cols.reserve(set.size());
  emb_rows.reserve(set.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    logit_cols.push_back(slice_rows(logits, i * rows, rows));
    emb_rows.push_back(slice_rows(emb, i * rows, rows));
  }
  out.reserve(set.size());
  for (Eigen::Index k = 1; k <= n; ++k) {
    Tensor weights = scale(softmax_rows(concat_cols(std::span<const Tensor>(logit_cols.data(), k))),
                           static_cast<double>(k));
    Tensor pooled;
    for (Eigen::Index i = 0; i < k; ++i) {
      Tensor term = mul_col(emb_rows[i], slice_cols(weights, i, 1));
      pooled = pooled.defined() ? add(pooled, term) : term;
    }
    out.push_back(pooled);
  }
  return out;
}

ParameterList AttentionPool::parameters() const {
  ParameterList out = encoder_.parameters();
  append(out, attention_.parameters());
  return out;
}

}  // namespace iboed::nn
