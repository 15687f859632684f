#include "iboed/nn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace iboed::nn {

namespace {

std::atomic<int> g_fault_op{-1};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddBias: return "add_bias";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MulCol: return "mul_col";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::ConcatRows: return "concat_rows";
    case Op::SliceRows: return "slice_rows";
    case Op::RepeatRows: return "repeat_rows";
    case Op::Reshape: return "reshape";
    case Op::LogSumExpRows: return "logsumexp_rows";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::Transpose: return "transpose";
    case Op::BlockDot: return "block_dot";
  }
  return "?";
}

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  return Tensor(std::move(node));
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(rows(), cols()));
  return node_->value(0, 0);
}

void Tensor::zero_grad() { node_->grad = Matrix::Zero(rows(), cols()); }

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_op(Matrix value, Op op, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward() requires a scalar root, got " +
                        (root.defined() ? shape_str(root.rows(), root.cols()) : std::string("undefined")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed, it is a valid reverse-topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  const int fault = g_fault_op.load(std::memory_order_relaxed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn || node->grad.size() == 0) continue;
    if (fault >= 0 && static_cast<int>(node->op) == fault) node->grad *= 1.5;
    node->backward_fn(*node);
  }
}

namespace {

// Accumulates into input i of `self` if that input tracks gradients.
template <typename Expr>
void push(Node& self, std::size_t i, const Expr& g) {
  Node& in = *self.inputs[i];
  if (in.requires_grad) in.accumulate(g);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), Op::MatMul, {a, b}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& B = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) push(self, 0, Matrix(self.grad * B.transpose()));
    if (self.inputs[1]->requires_grad) push(self, 1, Matrix(A.transpose() * self.grad));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), Op::Add, {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_bias: " + shape_str(a.rows(), a.cols()) + " + " + shape_str(bias.rows(), bias.cols()));
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return make_op(std::move(out), Op::AddBias, {a, bias}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) push(self, 1, Matrix(self.grad.colwise().sum()));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), Op::Sub, {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) push(self, 1, Matrix(-self.grad));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), Op::Mul, {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) push(self, 0, Matrix(self.grad.cwiseProduct(self.inputs[1]->value)));
    if (self.inputs[1]->requires_grad) push(self, 1, Matrix(self.grad.cwiseProduct(self.inputs[0]->value)));
  });
}

Tensor mul_col(const Tensor& a, const Tensor& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) {
    throw DimensionError("mul_col: " + shape_str(a.rows(), a.cols()) + " * " + shape_str(w.rows(), w.cols()));
  }
  Matrix out = a.value().array().colwise() * w.value().col(0).array();
  return make_op(std::move(out), Op::MulCol, {a, w}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& W = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      push(self, 0, Matrix(self.grad.array().colwise() * W.col(0).array()));
    }
    if (self.inputs[1]->requires_grad) push(self, 1, Matrix(self.grad.cwiseProduct(A).rowwise().sum()));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_op(a.value() * s, Op::Scale, {a}, [s](Node& self) { push(self, 0, Matrix(self.grad * s)); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return make_op(std::move(out), Op::AddScalar, {a}, [](Node& self) { push(self, 0, self.grad); });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), Op::Relu, {a}, [](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    push(self, 0, Matrix((x.array() > 0.0).select(self.grad, 0.0)));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh();
  return make_op(std::move(out), Op::Tanh, {a}, [](Node& self) {
    push(self, 0, Matrix(self.grad.array() * (1.0 - self.value.array().square())));
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse();
  return make_op(std::move(out), Op::Sigmoid, {a}, [](Node& self) {
    push(self, 0, Matrix(self.grad.array() * self.value.array() * (1.0 - self.value.array())));
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp();
  return make_op(std::move(out), Op::Exp, {a}, [](Node& self) { push(self, 0, Matrix(self.grad.cwiseProduct(self.value))); });
}

Tensor log(const Tensor& a) {
  Matrix out = a.value().array().log();
  return make_op(std::move(out), Op::Log, {a}, [](Node& self) {
    push(self, 0, Matrix(self.grad.array() / self.inputs[0]->value.array()));
  });
}

Tensor square(const Tensor& a) {
  Matrix out = a.value().array().square();
  return make_op(std::move(out), Op::Square, {a}, [](Node& self) {
    push(self, 0, Matrix(2.0 * self.grad.array() * self.inputs[0]->value.array()));
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), Op::Sum, {a}, [](Node& self) {
    const auto& in = *self.inputs[0];
    push(self, 0, Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  const double n = static_cast<double>(a.size());
  return make_op(std::move(out), Op::Mean, {a}, [n](Node& self) {
    const auto& in = *self.inputs[0];
    push(self, 0, Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0) / n));
  });
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return make_op(std::move(out), Op::RowSum, {a}, [](Node& self) {
    const auto cols = self.inputs[0]->value.cols();
    push(self, 0, Matrix(self.grad.replicate(1, cols)));
  });
}

Tensor col_sum(const Tensor& a) {
  Matrix out = a.value().colwise().sum();
  return make_op(std::move(out), Op::ColSum, {a}, [](Node& self) {
    const auto rows = self.inputs[0]->value.rows();
    push(self, 0, Matrix(self.grad.replicate(rows, 1)));
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), Op::ConcatCols, std::move(inputs), [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (!self.inputs[i]->requires_grad) continue;
      const auto w = self.inputs[i]->value.cols();
      push(self, i, Matrix(self.grad.middleCols(offsets[i], w)));
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols out of range on " + shape_str(a.rows(), a.cols()));
  }
  Matrix out = a.value().middleCols(start, count);
  return make_op(std::move(out), Op::SliceCols, {a}, [start, count](Node& self) {
    const auto& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleCols(start, count) = self.grad;
    push(self, 0, g);
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), Op::ConcatRows, std::move(inputs), [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (!self.inputs[i]->requires_grad) continue;
      const auto h = self.inputs[i]->value.rows();
      push(self, i, Matrix(self.grad.middleRows(offsets[i], h)));
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows out of range on " + shape_str(a.rows(), a.cols()));
  }
  Matrix out = a.value().middleRows(start, count);
  return make_op(std::move(out), Op::SliceRows, {a}, [start, count](Node& self) {
    const auto& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleRows(start, count) = self.grad;
    push(self, 0, g);
  });
}

Tensor repeat_rows(const Tensor& a, Eigen::Index k) {
  if (k < 1) throw DimensionError("repeat_rows: k must be positive");
  const auto r = a.rows();
  Matrix out(r * k, a.cols());
  for (Eigen::Index i = 0; i < r; ++i) out.middleRows(i * k, k) = a.value().row(i).replicate(k, 1);
  return make_op(std::move(out), Op::RepeatRows, {a}, [k](Node& self) {
    const auto& in = *self.inputs[0];
    Matrix g(in.value.rows(), in.value.cols());
    for (Eigen::Index i = 0; i < in.value.rows(); ++i) g.row(i) = self.grad.middleRows(i * k, k).colwise().sum();
    push(self, 0, g);
  });
}

namespace {

Matrix reshape_row_major(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  const auto src_cols = m.cols();
  for (Eigen::Index idx = 0; idx < m.size(); ++idx) {
    out(idx / cols, idx % cols) = m(idx / src_cols, idx % src_cols);
  }
  return out;
}

}  // namespace

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.size()) {
    throw DimensionError("reshape " + shape_str(a.rows(), a.cols()) + " -> " + shape_str(rows, cols));
  }
  return make_op(reshape_row_major(a.value(), rows, cols), Op::Reshape, {a}, [](Node& self) {
    const auto& in = *self.inputs[0];
    push(self, 0, reshape_row_major(self.grad, in.value.rows(), in.value.cols()));
  });
}

Tensor logsumexp_rows(const Tensor& a) {
  if (a.cols() == 0) throw DimensionError("logsumexp_rows over zero columns");
  const Eigen::VectorXd m = a.value().rowwise().maxCoeff();
  Matrix shifted = a.value().colwise() - m;
  Eigen::VectorXd lse = m.array() + shifted.array().exp().rowwise().sum().log();
  Matrix out = lse;
  return make_op(std::move(out), Op::LogSumExpRows, {a}, [](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    Matrix soft = (x.colwise() - self.value.col(0)).array().exp();
    push(self, 0, Matrix(soft.array().colwise() * self.grad.col(0).array()));
  });
}

Tensor softmax_rows(const Tensor& a) {
  if (a.cols() == 0) throw DimensionError("softmax_rows over zero columns");
  const Eigen::VectorXd m = a.value().rowwise().maxCoeff();
  Matrix e = (a.value().colwise() - m).array().exp();
  Eigen::VectorXd z = e.rowwise().sum();
  Matrix out = e.array().colwise() / z.array();
  return make_op(std::move(out), Op::SoftmaxRows, {a}, [](Node& self) {
    const Matrix& s = self.value;
    Eigen::VectorXd dot = self.grad.cwiseProduct(s).rowwise().sum();
    push(self, 0, Matrix(s.array() * (self.grad.colwise() - dot).array()));
  });
}

Tensor transpose(const Tensor& a) {
  return make_op(a.value().transpose(), Op::Transpose, {a},
                 [](Node& self) { push(self, 0, Matrix(self.grad.transpose())); });
}

Tensor block_dot(const Tensor& a, const Tensor& b) {
  const auto B = a.rows();
  if (B == 0 || b.cols() != a.cols() || b.rows() % B != 0) {
    throw DimensionError("block_dot: " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
  }
  const auto K = b.rows() / B;
  Matrix out(B, K);
  for (Eigen::Index i = 0; i < B; ++i) {
    out.row(i).noalias() = (b.value().middleRows(i * K, K) * a.value().row(i).transpose()).transpose();
  }
  return make_op(std::move(out), Op::BlockDot, {a, b}, [B, K](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& Bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Matrix g(B, A.cols());
      for (Eigen::Index i = 0; i < B; ++i) g.row(i).noalias() = self.grad.row(i) * Bv.middleRows(i * K, K);
      push(self, 0, g);
    }
    if (self.inputs[1]->requires_grad) {
      Matrix g(B * K, A.cols());
      for (Eigen::Index i = 0; i < B; ++i) g.middleRows(i * K, K).noalias() = self.grad.row(i).transpose() * A.row(i);
      push(self, 1, g);
    }
  });
}

namespace testing {

void set_backward_fault(Op op) { g_fault_op.store(static_cast<int>(op)); }
void clear_backward_fault() { g_fault_op.store(-1); }

}  // namespace testing

}  // namespace iboed::nn
