#include "simpool/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "simpool/errors.hpp"

namespace simpool::ad {
namespace {

std::string g_corrupt_op;

std::string shape_str(const Matrix& m) {
  std::ostringstream s;
  s << m.rows() << "x" << m.cols();
  return s.str();
}

Tape& same_tape(const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw ArgumentError("operation on an empty tensor");
  if (a.tape() != b.tape()) throw ArgumentError("tensors belong to different tapes");
  return *a.tape();
}

Tape& tape_of(const Tensor& a) {
  if (!a.valid()) throw ArgumentError("operation on an empty tensor");
  return *a.tape();
}

struct BroadcastShape {
  Eigen::Index rows;
  Eigen::Index cols;
};

BroadcastShape broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  const auto r = std::max(a.rows(), b.rows());
  const auto c = std::max(a.cols(), b.cols());
  auto ok = [&](const Matrix& m) {
    return (m.rows() == r || m.rows() == 1) && (m.cols() == c || m.cols() == 1);
  };
  if (!ok(a) || !ok(b)) {
    throw ArgumentError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                        shape_str(b));
  }
  return {r, c};
}

Matrix expand(const Matrix& m, BroadcastShape s) {
  if (m.rows() == s.rows && m.cols() == s.cols) return m;
  return m.replicate(s.rows / m.rows(), s.cols / m.cols());
}

Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix out = g;
  if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

// Elementwise unary op with a derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  Matrix y = a.value().unaryExpr(fwd);
  const auto ia = a.id();
  return t.record(std::move(y), {ia}, [ia, deriv](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix g = tp.grad(self);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) *= deriv(x(i, j), y(i, j));
    tp.accumulate(ia, g);
  }, op);
}

}  // namespace

// --- Tensor / Tape --------------------------------------------------------

const Matrix& Tensor::value() const {
  if (!tape_) throw ArgumentError("empty tensor");
  return tape_->value(id_);
}

Matrix Tensor::grad() const {
  const Matrix& g = tape_->grad(id_);
  if (g.size() == 0) return Matrix::Zero(rows(), cols());
  return g;
}

bool Tensor::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

double Tensor::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ArgumentError("item() on a " + shape_str(v) + " tensor");
  return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::vector<std::size_t> parents, Backward backward,
                    const char* op) {
  Node n;
  n.value = std::move(value);
  for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = corrupt_current_ ? Matrix(1.1 * g) : g;
  } else if (corrupt_current_) {
    n.grad += 1.1 * g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Tensor& root) {
  if (root.tape() != this) throw ArgumentError("backward root belongs to another tape");
  if (root.value().size() != 1) throw ArgumentError("backward root must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  visits_ = 0;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t k = root.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    ++visits_;
    if (n.backward) {
      corrupt_current_ = !g_corrupt_op.empty() && g_corrupt_op == n.op;
      n.backward(*this, k);
      corrupt_current_ = false;
    }
    if (n.param) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
  }
}

// --- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ArgumentError("matmul: shapes " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  }, "matmul");
}

Tensor transpose(const Tensor& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().transpose(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).transpose());
  }, "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "add");
  const auto ia = a.id(), ib = b.id();
  Matrix y = expand(a.value(), s) + expand(b.value(), s);
  return t.record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "sub");
  const auto ia = a.id(), ib = b.id();
  Matrix y = expand(a.value(), s) - expand(b.value(), s);
  return t.record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, -reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "mul");
  const auto ia = a.id(), ib = b.id();
  Matrix y = expand(a.value(), s).cwiseProduct(expand(b.value(), s));
  return t.record(std::move(y), {ia, ib}, [ia, ib, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& va = tp.value(ia);
    const Matrix& vb = tp.value(ib);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g.cwiseProduct(expand(vb, s)), va.rows(), va.cols()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g.cwiseProduct(expand(va, s)), vb.rows(), vb.cols()));
  }, "mul");
}

Tensor scale(const Tensor& a, double s) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value() * s, {ia}, [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self) * s);
  }, "scale");
}

Tensor div_scalar(const Tensor& a, double d) {
  if (d == 0.0) throw DomainError("div_scalar: division by zero");
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value() / d, {ia}, [ia, d](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self) / d);
  }, "div_scalar");
}

Tensor add_scalar(const Tensor& a, double s) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix y = a.value().array() + s;
  return t.record(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
  }, "add_scalar");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw ArgumentError("concat_cols: tensors belong to different tapes");
    if (p.rows() != rows) throw ArgumentError("concat_cols: row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.record(std::move(y), ids, [ids, widths](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(o, widths[k]));
      o += widths[k];
    }
  }, "concat_cols");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_cols(parts);
}

Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> rows) {
  Tape& t = tape_of(a);
  const Matrix& v = a.value();
  Matrix y(static_cast<Eigen::Index>(rows.size()), v.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= v.rows()) throw ArgumentError("gather_rows: index out of bounds");
    y.row(static_cast<Eigen::Index>(k)) = v.row(rows[k]);
  }
  const auto ia = a.id();
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return t.record(std::move(y), {ia}, [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    tp.accumulate(ia, ga);
  }, "gather_rows");
}

Tensor gather(const Tensor& a, const IndexMatrix& row_idx, const IndexMatrix& col_idx) {
  Tape& t = tape_of(a);
  if (row_idx.rows() != col_idx.rows() || row_idx.cols() != col_idx.cols()) {
    throw ArgumentError("gather: index matrices differ in shape");
  }
  const Matrix& v = a.value();
  Matrix y = Matrix::Zero(row_idx.rows(), row_idx.cols());
  for (Eigen::Index i = 0; i < row_idx.rows(); ++i) {
    for (Eigen::Index j = 0; j < row_idx.cols(); ++j) {
      const auto r = row_idx(i, j), c = col_idx(i, j);
      if (r < 0 || c < 0) continue;
      if (r >= v.rows() || c >= v.cols()) throw ArgumentError("gather: index out of bounds");
      y(i, j) = v(r, c);
    }
  }
  const auto ia = a.id();
  return t.record(std::move(y), {ia}, [ia, row_idx, col_idx](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    for (Eigen::Index i = 0; i < row_idx.rows(); ++i) {
      for (Eigen::Index j = 0; j < row_idx.cols(); ++j) {
        if (row_idx(i, j) < 0 || col_idx(i, j) < 0) continue;
        ga(row_idx(i, j), col_idx(i, j)) += g(i, j);
      }
    }
    tp.accumulate(ia, ga);
  }, "gather");
}

Tensor softmax_rows(const Tensor& a) {
  Tape& t = tape_of(a);
  const Matrix& v = a.value();
  Matrix y(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    y.row(i) = (v.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  const auto ia = a.id();
  return t.record(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& s = tp.value(self);
    Eigen::VectorXd dot = g.cwiseProduct(s).rowwise().sum();
    Matrix ga = s.cwiseProduct(g - dot.replicate(1, g.cols()));
    tp.accumulate(ia, ga);
  }, "softmax_rows");
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any() || a.value().hasNaN()) {
    throw DomainError("log of non-positive entry; clamp the input first");
  }
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(a, "clamp_min", [lo](double x) { return x > lo ? x : lo; },
               [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor pow_scalar(const Tensor& a, double exponent) {
  if (exponent != std::floor(exponent) && (a.value().array() < 0.0).any()) {
    throw DomainError("pow_scalar: fractional power of a negative entry");
  }
  return unary(a, "pow_scalar", [exponent](double x) { return std::pow(x, exponent); },
               [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Tensor safe_reciprocal(const Tensor& a) {
  return unary(a, "safe_reciprocal", [](double x) { return x != 0.0 ? 1.0 / x : 0.0; },
               [](double x, double) { return x != 0.0 ? -1.0 / (x * x) : 0.0; });
}

Tensor sum(const Tensor& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return t.record(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& v = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), tp.grad(self)(0, 0)));
  }, "sum");
}

Tensor row_sum(const Tensor& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().rowwise().sum(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).replicate(1, tp.value(ia).cols()));
  }, "row_sum");
}

Tensor col_sum(const Tensor& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().colwise().sum(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).replicate(tp.value(ia).rows(), 1));
  }, "col_sum");
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor l2_norm_rows(const Tensor& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix y = a.value().rowwise().norm();
  return t.record(std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    const Matrix& n = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix ga(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double f = n(i, 0) > 0.0 ? g(i, 0) / n(i, 0) : 0.0;
      ga.row(i) = x.row(i) * f;
    }
    tp.accumulate(ia, ga);
  }, "l2_norm_rows");
}

Tensor masked_fill(const Tensor& a, const Matrix& mask, double fill) {
  Tape& t = tape_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ArgumentError("masked_fill: mask shape " + shape_str(mask) + " vs " + shape_str(a.value()));
  }
  Matrix y = (mask.array() != 0.0).select(Matrix::Constant(a.rows(), a.cols(), fill), a.value());
  const auto ia = a.id();
  return t.record(std::move(y), {ia}, [ia, mask](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, (mask.array() != 0.0).select(Matrix::Zero(g.rows(), g.cols()), g));
  }, "masked_fill");
}

Tensor spmm(const SparseMatrix& s, const Tensor& b) {
  Tape& t = tape_of(b);
  if (s.cols() != b.rows()) {
    throw ArgumentError("spmm: sparse " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                        " times " + shape_str(b.value()));
  }
  const auto ib = b.id();
  Matrix y = s * b.value();
  return t.record(std::move(y), {ib}, [ib, s](Tape& tp, std::size_t self) {
    tp.accumulate(ib, s.transpose() * tp.grad(self));
  }, "spmm");
}

// --- finite differences -------------------------------------------------------

namespace {

void check_epsilon(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ArgumentError("epsilon must lie in [1e-7, 1e-3]");
}

double rel_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

double finite(double v) {
  if (!std::isfinite(v)) throw NumericError("non-finite value during gradient check");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x,
                  double epsilon) {
  check_epsilon(epsilon);
  Matrix analytic;
  {
    Tape tape;
    Tensor xv = tape.variable(x);
    Tensor y = f(tape, xv);
    finite(y.item());
    tape.backward(y);
    analytic = xv.grad();
  }
  auto eval = [&](const Matrix& at) {
    Tape tape;
    Tensor xv = tape.constant(at);
    return finite(f(tape, xv).item());
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double orig = probe(i, j);
      probe(i, j) = orig + epsilon;
      const double up = eval(probe);
      probe(i, j) = orig - epsilon;
      const double down = eval(probe);
      probe(i, j) = orig;
      worst = std::max(worst, rel_error(analytic(i, j), (up - down) / (2.0 * epsilon)));
    }
  }
  return worst;
}

double grad_check_parameters(const std::function<Tensor(Tape&)>& f,
                             std::span<Parameter* const> params, double epsilon) {
  check_epsilon(epsilon);
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Tensor y = f(tape);
    finite(y.item());
    tape.backward(y);
  }
  std::vector<Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  auto eval = [&] {
    Tape tape;
    return finite(f(tape).item());
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k]->value;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double orig = v(i, j);
        v(i, j) = orig + epsilon;
        const double up = eval();
        v(i, j) = orig - epsilon;
        const double down = eval();
        v(i, j) = orig;
        worst = std::max(worst, rel_error(analytic[k](i, j), (up - down) / (2.0 * epsilon)));
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

namespace debug {
void corrupt_backward(std::string op) { g_corrupt_op = std::move(op); }
}  // namespace debug

}  // namespace simpool::ad
