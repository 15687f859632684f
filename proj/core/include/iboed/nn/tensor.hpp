#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a graph node holding a 2-D value (rows are
// batch entries by convention), its accumulated gradient, and the closure that
// pushes the node's gradient to its inputs. Graphs are built implicitly by the
// free functions below and released when the last handle goes away.

#include "iboed/common.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace iboed::nn {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  AddBias,
  Sub,
  Mul,
  MulCol,
  Scale,
  AddScalar,
  Relu,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  RowSum,
  ColSum,
  ConcatCols,
  SliceCols,
  ConcatRows,
  SliceRows,
  RepeatRows,
  Reshape,
  LogSumExpRows,
  SoftmaxRows,
  Transpose,
  BlockDot,
};

inline constexpr int kNumOps = static_cast<int>(Op::BlockDot) + 1;

const char* op_name(Op op);

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  Op op = Op::Leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Matrix& value() const { return node_->value; }
  // Direct write access, for optimizers and target-network updates only.
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }
  // Gradient accumulated by backward(); zeros if nothing has flowed in yet.
  [[nodiscard]] Matrix grad() const;
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
  [[nodiscard]] Eigen::Index size() const { return node_->value.size(); }
  [[nodiscard]] Op op() const { return node_->op; }
  [[nodiscard]] double item() const;

  void zero_grad();

  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(Matrix, Op, std::vector<Tensor>, std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

// Creates an interior node. The backward closure runs only when the node
// requires a gradient, i.e. when any input does.
Tensor make_op(Matrix value, Op op, std::vector<Tensor> inputs, std::function<void(Node&)> backward);

// While alive, ops on this thread record no graph (inference only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 and propagates to every reachable node, visiting
// each node once. Throws ContractError unless root is 1x1.
void backward(const Tensor& root);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// a (r x c) + bias (1 x c) broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a (r x c) scaled row-wise by w (r x 1).
Tensor mul_col(const Tensor& a, const Tensor& w);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sum(const Tensor& a);  // (r x c) -> (r x 1)
Tensor col_sum(const Tensor& a);  // (r x c) -> (1 x c)

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
// Row i of the input becomes rows [i*k, (i+1)*k) of the output.
Tensor repeat_rows(const Tensor& a, Eigen::Index k);
// Reinterprets the row-major element order under a new shape.
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);

Tensor logsumexp_rows(const Tensor& a);  // (r x c) -> (r x 1)
Tensor softmax_rows(const Tensor& a);
Tensor transpose(const Tensor& a);
// a (B x d), b (B*K x d) -> (B x K) with out(i, l) = <a.row(i), b.row(i*K + l)>.
Tensor block_dot(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

namespace testing {
// Mutation hook for the gradient-check diagnostics: while set, the backward
// rule of `op` is deliberately wrong. Never enabled outside diagnostics.
void set_backward_fault(Op op);
void clear_backward_fault();
}  // namespace testing

}  // namespace iboed::nn
