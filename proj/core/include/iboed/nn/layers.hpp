#pragma once

#include "iboed/nn/tensor.hpp"

#include <span>
#include <vector>

namespace iboed::nn {

using ParameterList = std::vector<Tensor>;

enum class Activation { Identity, Relu, Tanh, Sigmoid };

Tensor activate(const Tensor& x, Activation a);
Matrix activate(const Matrix& x, Activation a);

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims{256, 256};
  int output_dim = 0;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Identity;
};

// Fully connected network. Weights are stored (in x out) so a batch of row
// vectors multiplies on the left.
class Mlp {
 public:
  // He-style uniform fan-in init: hidden layers U(+-sqrt(6/fan_in)), output layer U(+-sqrt(1/fan_in)), zero biases.
  Mlp(MlpSpec spec, Rng& rng);
  // Every weight and bias zero.
  static Mlp zeros(MlpSpec spec);

  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;
  Mlp(const Mlp&) = delete;
  Mlp& operator=(const Mlp&) = delete;

  // Deep copy with independent parameter storage.
  [[nodiscard]] Mlp clone() const;

  [[nodiscard]] Tensor forward(const Tensor& x) const;
  // Same arithmetic as forward() without recording a graph.
  [[nodiscard]] Matrix predict(const Matrix& x) const;

  [[nodiscard]] ParameterList parameters() const;
  [[nodiscard]] const MlpSpec& spec() const { return spec_; }

  // Layer access for initialization tweaks and tests.
  [[nodiscard]] std::size_t num_layers() const { return weights_.size(); }
  [[nodiscard]] Tensor& weight(std::size_t i) { return weights_.at(i); }
  [[nodiscard]] Tensor& bias(std::size_t i) { return biases_.at(i); }

 private:
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {}
  void check_input(Eigen::Index cols) const;

  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

struct LstmSpec {
  int input_dim = 0;
  int hidden_dim = 0;
};

// Single-layer LSTM; gate columns are ordered (input, forget, cell, output).
class Lstm {
 public:
  Lstm(LstmSpec spec, Rng& rng);
  static Lstm zeros(LstmSpec spec);

  Lstm(Lstm&&) noexcept = default;
  Lstm& operator=(Lstm&&) noexcept = default;
  Lstm(const Lstm&) = delete;
  Lstm& operator=(const Lstm&) = delete;

  [[nodiscard]] Lstm clone() const;

  // Final hidden state after consuming `sequence` (each element batch x input_dim).
  // An empty sequence yields the zero initial state with `batch` rows.
  [[nodiscard]] Tensor forward_sequence(std::span<const Tensor> sequence, Eigen::Index batch = 1) const;
  // Hidden state after each prefix; element t encodes the first t+1 inputs.
  [[nodiscard]] std::vector<Tensor> forward_prefixes(std::span<const Tensor> sequence) const;

  [[nodiscard]] ParameterList parameters() const { return {w_input_, w_hidden_, bias_}; }
  [[nodiscard]] const LstmSpec& spec() const { return spec_; }

  [[nodiscard]] Tensor& input_weights() { return w_input_; }
  [[nodiscard]] Tensor& hidden_weights() { return w_hidden_; }
  [[nodiscard]] Tensor& gate_bias() { return bias_; }

 private:
  explicit Lstm(LstmSpec spec) : spec_(spec) {}
  void check_sequence(std::span<const Tensor> sequence) const;

  LstmSpec spec_;
  Tensor w_input_;   // input_dim x 4H
  Tensor w_hidden_;  // H x 4H
  Tensor bias_;      // 1 x 4H
};

struct AttentionPoolSpec {
  MlpSpec encoder;    // element -> embedding
  MlpSpec attention;  // embedding -> scalar logit
};

// Permutation-invariant set pooling. Each element x_i is embedded as
// e_i = encoder(x_i); logits a_i = attention(e_i) give softmax weights w_i,
// and the pooled value is n * sum_i w_i e_i. With uniform attention this is
// plain sum pooling; the empty set pools to zero.
class AttentionPool {
 public:
  AttentionPool(AttentionPoolSpec spec, Rng& rng);

  AttentionPool(AttentionPool&&) noexcept = default;
  AttentionPool& operator=(AttentionPool&&) noexcept = default;
  AttentionPool(const AttentionPool&) = delete;
  AttentionPool& operator=(const AttentionPool&) = delete;

  [[nodiscard]] AttentionPool clone() const;

  // Each set element is a (batch x input_dim) tensor; rows are independent sets.
  [[nodiscard]] Tensor forward(std::span<const Tensor> set, Eigen::Index batch = 1) const;
  // Pooled value of every prefix; element t pools the first t+1 elements.
  // The element embeddings are computed once and shared.
  [[nodiscard]] std::vector<Tensor> forward_prefixes(std::span<const Tensor> set) const;

  [[nodiscard]] ParameterList parameters() const;
  [[nodiscard]] int output_dim() const { return encoder_.spec().output_dim; }
  [[nodiscard]] int input_dim() const { return encoder_.spec().input_dim; }

  [[nodiscard]] Mlp& encoder() { return encoder_; }
  [[nodiscard]] Mlp& attention() { return attention_; }
  [[nodiscard]] const Mlp& encoder() const { return encoder_; }
  [[nodiscard]] const Mlp& attention() const { return attention_; }

 private:
  AttentionPool(Mlp encoder, Mlp attention) : encoder_(std::move(encoder)), attention_(std::move(attention)) {}

  Mlp encoder_;
  Mlp attention_;
};

// Concatenation helper used by every parameterized component.
inline void append(ParameterList& dst, const ParameterList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

void zero_grad(const ParameterList& params);

}  // namespace iboed::nn
