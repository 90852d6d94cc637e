#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "simpool/errors.hpp"
#include "simpool/tensor.hpp"
#include "support.hpp"

using namespace simpool;
using ad::Tape;
using ad::Tensor;
using testsupport::random_matrix;

namespace {

using Fn = std::function<Tensor(Tape&, const Tensor&)>;

// Scalarises through fixed random weights so every output entry matters.
Fn weighted(std::function<Tensor(Tape&, const Tensor&)> f, Matrix weights) {
  return [f = std::move(f), w = std::move(weights)](Tape& t, const Tensor& x) {
    Tensor y = f(t, x);
    REQUIRE(y.rows() == w.rows());
    REQUIRE(y.cols() == w.cols());
    return ad::sum(ad::mul(y, t.constant(w)));
  };
}

struct Primitive {
  const char* name;
  Eigen::Index out_rows, out_cols;  // for 4x3 input
  double lo, hi;
  std::function<Tensor(Tape&, const Tensor&)> f;
};

}  // namespace

TEST_CASE("forward values of simple primitives") {
  Tape t;
  std::mt19937_64 rng(1);
  const Matrix m = random_matrix(rng, 3, 3);
  CHECK(ad::matmul(t.constant(Matrix::Identity(3, 3)), t.constant(m)).value() == m);

  const Tensor s = ad::softmax_rows(t.constant(Matrix::Constant(2, 5, 3.7)));
  for (Eigen::Index i = 0; i < s.value().size(); ++i) CHECK(s.value().data()[i] == doctest::Approx(0.2));

  const Tensor x = t.variable(Matrix::Zero(2, 3));
  t.backward(ad::sum(ad::tanh(x)));
  CHECK(x.grad() == Matrix::Ones(2, 3));
}

TEST_CASE("broadcasting add/mul with row and column vectors") {
  Tape t;
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Matrix row(1, 3);
  row << 10, 20, 30;
  Matrix col(2, 1);
  col << 2, 3;
  const Matrix sum_row = ad::add(t.constant(a), t.constant(row)).value();
  CHECK(sum_row(1, 2) == 36.0);
  const Matrix prod_col = ad::mul(t.constant(a), t.constant(col)).value();
  CHECK(prod_col(1, 0) == 12.0);
  CHECK(prod_col(0, 2) == 6.0);
  CHECK_THROWS_AS(ad::add(t.constant(a), t.constant(Matrix::Ones(3, 2))), ArgumentError);
  CHECK_THROWS_AS(ad::matmul(t.constant(a), t.constant(a)), ArgumentError);
}

TEST_CASE("grad_check on sum of squares agrees with 2x") {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(rng, 4, 3);
  const double err = ad::grad_check([](Tape&, const Tensor& v) { return ad::sum(ad::mul(v, v)); }, x, 1e-5);
  CHECK(err < 1e-6);
  Tape t;
  const Tensor v = t.variable(x);
  t.backward(ad::sum(ad::mul(v, v)));
  CHECK((v.grad() - 2.0 * x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("grad_check of weighted softmax and constants") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix c = random_matrix(rng, 5, 4);
  CHECK(ad::grad_check(weighted([](Tape&, const Tensor& v) { return ad::softmax_rows(v); }, c), x, 1e-5) < 1e-4);
  const double constant_err = ad::grad_check(
      [](Tape& t, const Tensor&) { return ad::sum(t.constant(Matrix::Ones(2, 2))); }, x, 1e-5);
  CHECK(constant_err == 0.0);
}

TEST_CASE("grad_check argument validation") {
  const Matrix x = Matrix::Ones(2, 2);
  auto f = [](Tape&, const Tensor& v) { return ad::sum(v); };
  CHECK_THROWS_AS(ad::grad_check(f, x, 1e-8), ArgumentError);
  CHECK_THROWS_AS(ad::grad_check(f, x, 1e-2), ArgumentError);
  CHECK_THROWS_AS(ad::grad_check([](Tape& t, const Tensor& v) {
                    return ad::sum(ad::mul(v, t.constant(Matrix::Constant(2, 2, std::numeric_limits<double>::infinity()))));
                  }, x, 1e-5),
                  NumericError);
}

TEST_CASE("every primitive matches central differences on 50 random inputs") {
  std::mt19937_64 rng(4);
  const Matrix other34 = random_matrix(rng, 3, 4);
  const Matrix other43 = random_matrix(rng, 4, 3);
  const Matrix other_row = random_matrix(rng, 1, 3);
  const Matrix other_col = random_matrix(rng, 4, 1);
  const Matrix mask = (random_matrix(rng, 4, 3, 0.0, 1.0).array() > 0.5).cast<double>();
  ad::IndexMatrix ri(4, 2), ci(4, 2);
  ri << 0, 1, 2, -1, 3, 3, 1, 0;
  ci << 2, 0, 1, 0, 0, 2, -1, 1;
  SparseMatrix sp = testsupport::to_sparse(random_matrix(rng, 5, 4, 0.0, 1.0).cwiseMax(0.5) - Matrix::Constant(5, 4, 0.5));
  const std::vector<Eigen::Index> rows{3, 0, 0, 2, 1};

  const std::vector<Primitive> prims = {
      {"matmul", 4, 4, -2, 2, [&](Tape& t, const Tensor& x) { return ad::matmul(x, t.constant(other34)); }},
      {"matmul_rhs", 3, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::matmul(t.constant(other34), x); }},
      {"transpose", 3, 4, -2, 2, [](Tape&, const Tensor& x) { return ad::transpose(x); }},
      {"add", 4, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::add(x, t.constant(other43)); }},
      {"add_row", 4, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::add(t.constant(other_row), x); }},
      {"sub", 4, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::sub(t.constant(other43), x); }},
      {"mul", 4, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::mul(x, t.constant(other43)); }},
      {"mul_self", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::mul(x, x); }},
      {"mul_col", 4, 3, -2, 2, [&](Tape& t, const Tensor& x) { return ad::mul(x, t.constant(other_col)); }},
      {"mul_broadcast_grad", 4, 3, -2, 2,
       [](Tape&, const Tensor& x) { return ad::mul(x, ad::row_sum(x)); }},
      {"scale", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::scale(x, -1.7); }},
      {"div_scalar", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::div_scalar(x, 7.0); }},
      {"add_scalar", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::add_scalar(x, 0.3); }},
      {"concat_cols", 4, 6, -2, 2, [&](Tape& t, const Tensor& x) { return ad::concat_cols(t.constant(other43), x); }},
      {"gather_rows", 5, 3, -2, 2, [&](Tape&, const Tensor& x) { return ad::gather_rows(x, rows); }},
      {"gather", 4, 2, -2, 2, [&](Tape&, const Tensor& x) { return ad::gather(x, ri, ci); }},
      {"softmax_rows", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::softmax_rows(x); }},
      {"tanh", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::tanh(x); }},
      {"relu", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::relu(x); }},
      {"log", 4, 3, 0.2, 2, [](Tape&, const Tensor& x) { return ad::log(x); }},
      {"clamp_min", 4, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::clamp_min(x, 0.1); }},
      {"pow_scalar", 4, 3, 0.2, 2, [](Tape&, const Tensor& x) { return ad::pow_scalar(x, -0.5); }},
      {"safe_reciprocal", 4, 3, 0.2, 2, [](Tape&, const Tensor& x) { return ad::safe_reciprocal(x); }},
      {"sum", 1, 1, -2, 2, [](Tape&, const Tensor& x) { return ad::sum(x); }},
      {"row_sum", 4, 1, -2, 2, [](Tape&, const Tensor& x) { return ad::row_sum(x); }},
      {"col_sum", 1, 3, -2, 2, [](Tape&, const Tensor& x) { return ad::col_sum(x); }},
      {"mean", 1, 1, -2, 2, [](Tape&, const Tensor& x) { return ad::mean(x); }},
      {"l2_norm_rows", 4, 1, -2, 2, [](Tape&, const Tensor& x) { return ad::l2_norm_rows(x); }},
      {"masked_fill", 4, 3, -2, 2, [&](Tape&, const Tensor& x) { return ad::masked_fill(x, mask, 0.25); }},
      {"spmm", 5, 3, -2, 2, [&](Tape&, const Tensor& x) { return ad::spmm(sp, x); }},
  };
  for (const auto& p : prims) {
    CAPTURE(p.name);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix x = random_matrix(rng, 4, 3, p.lo, p.hi);
      const Matrix w = random_matrix(rng, p.out_rows, p.out_cols);
      worst = std::max(worst, ad::grad_check(weighted(p.f, w), x, 1e-5));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("backward is deterministic and visits every differentiable node once") {
  std::mt19937_64 rng(5);
  const Matrix x0 = random_matrix(rng, 6, 4);
  const Matrix w0 = random_matrix(rng, 4, 4);
  auto run = [&](std::size_t* visits, std::size_t* nodes) {
    Tape t;
    const Tensor x = t.variable(x0);
    const Tensor h = ad::tanh(ad::matmul(x, t.constant(w0)));
    const Tensor loss = ad::sum(ad::softmax_rows(ad::add(h, h)));
    t.backward(loss);
    if (visits) *visits = t.last_backward_visits();
    if (nodes) *nodes = t.size();
    return x.grad();
  };
  std::size_t visits = 0, nodes = 0;
  const Matrix g1 = run(&visits, &nodes);
  const Matrix g2 = run(nullptr, nullptr);
  CHECK(g1 == g2);
  CHECK(visits == nodes - 1);  // the constant weight needs no gradient
}

TEST_CASE("gather passes no gradient to unselected entries") {
  Tape t;
  Matrix src(3, 3);
  src << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const Tensor x = t.variable(src);
  ad::IndexMatrix r(2, 1), c(2, 1);
  r << 0, 2;
  c << 1, -1;
  const Tensor g = ad::gather(x, r, c);
  CHECK(g.value()(0, 0) == 2.0);
  CHECK(g.value()(1, 0) == 0.0);
  t.backward(ad::sum(g));
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 1) = 1.0;
  CHECK(x.grad() == expect);
  CHECK_THROWS_AS(ad::gather(x, ad::IndexMatrix::Constant(1, 1, 3), ad::IndexMatrix::Constant(1, 1, 0)), ArgumentError);
}

TEST_CASE("log rejects non-positive input; clamped log is fine") {
  Tape t;
  Matrix z = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(ad::log(t.constant(z)), DomainError);
  CHECK(ad::log(ad::clamp_min(t.constant(z), 1e-12)).value()(0, 0) == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("parameters accumulate gradients across tapes") {
  ad::Parameter p("w", Matrix::Constant(2, 2, 0.5));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(ad::sum(t.parameter(p)));
  }
  CHECK(p.grad == Matrix::Constant(2, 2, 2.0));
  p.zero_grad();
  CHECK(p.grad.isZero(0.0));
}

TEST_CASE("corrupted backward is caught by grad_check") {
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(rng, 3, 3);
  auto f = [](Tape&, const Tensor& v) { return ad::sum(ad::tanh(v)); };
  ad::debug::corrupt_backward("tanh");
  const double bad = ad::grad_check(f, x, 1e-5);
  ad::debug::corrupt_backward("");
  CHECK(bad > 1e-3);
  CHECK(ad::grad_check(f, x, 1e-5) < 1e-6);
}
