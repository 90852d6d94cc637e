#pragma once

// Dense reverse-mode automatic differentiation.
//
// A Tape records every operation in creation order, so parents always
// precede children and the backward pass is a single reverse sweep. Tensors
// are lightweight handles into a tape. Trainable weights live outside any
// tape as Parameters; Tape::parameter() makes a leaf whose gradient is
// accumulated back into Parameter::grad when backward() runs.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace simpool::ad {

using Matrix = Eigen::MatrixXd;
using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  // Zero-filled if backward() has not reached this tensor.
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double item() const;  // value of a 1x1 tensor

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);
  Tensor parameter(Parameter& p);

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse. The
  // root must be 1x1. Gradients of parameter leaves are added to
  // Parameter::grad.
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

  // Used by the primitive implementations.
  Tensor record(Matrix value, std::vector<std::size_t> parents, Backward backward, const char* op);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    Backward backward;
    Parameter* param = nullptr;
    const char* op = "leaf";
  };
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
  bool corrupt_current_ = false;
};

// --- primitives -----------------------------------------------------------
// Binary elementwise ops accept equal shapes or a row vector (1 x c),
// column vector (r x 1) or 1x1 scalar on either side.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a / d, rounded as a division (not a multiplication by 1/d).
Tensor div_scalar(const Tensor& a, double d);
Tensor add_scalar(const Tensor& a, double s);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// out.row(t) = a.row(rows[t]). Indices are constants.
Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> rows);
// out(i, t) = a(row_idx(i, t), col_idx(i, t)); a negative index yields 0.
// Indices are constants and receive no gradient.
Tensor gather(const Tensor& a, const IndexMatrix& row_idx, const IndexMatrix& col_idx);
Tensor softmax_rows(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
// Throws DomainError on any entry <= 0.
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
Tensor pow_scalar(const Tensor& a, double exponent);
// 1/x where x != 0, else 0.
Tensor safe_reciprocal(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor row_sum(const Tensor& a);
Tensor col_sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l2_norm_rows(const Tensor& a);
// Entries where mask != 0 are replaced by `fill` and pass no gradient.
Tensor masked_fill(const Tensor& a, const Matrix& mask, double fill);
// Constant sparse left operand: out = s * b.
Tensor spmm(const SparseMatrix& s, const Tensor& b);

// --- finite-difference checking --------------------------------------------

// max over coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|).
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x,
                  double epsilon);
double grad_check_parameters(const std::function<Tensor(Tape&)>& f,
                             std::span<Parameter* const> params, double epsilon);

namespace debug {
// Negative-control hook: when set, the backward of every op named `op`
// ("tanh", "matmul", ...) is scaled by 1.1. Empty string disables.
void corrupt_backward(std::string op);
}  // namespace debug

}  // namespace simpool::ad
