#include "helpers.hpp"

#include "itergraph/numkit/adam.hpp"
#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/grad_check.hpp"
#include "itergraph/numkit/ops.hpp"
#include "itergraph/numkit/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

using namespace itergraph;
using testing::random_matrix;

namespace {

double check(const std::function<Var(Tape&, const Var&)>& f, Tensor& p) {
  Tensor* params[] = {&p};
  const auto r = grad_check([&](Tape& tape) { return f(tape, tape.leaf(p)); }, params);
  return r.max_relative_error;
}

double check2(const std::function<Var(Tape&, const Var&, const Var&)>& f, Tensor& a, Tensor& b) {
  Tensor* params[] = {&a, &b};
  const auto r = grad_check([&](Tape& tape) { return f(tape, tape.leaf(a), tape.leaf(b)); }, params);
  return r.max_relative_error;
}

}  // namespace

TEST_CASE("backward: sum gives ones") {
  Tensor w("w", Matrix::Random(2, 2));
  w.zero_grad();
  Tape tape;
  tape.backward(ops::sum(tape.leaf(w)));
  CHECK(w.grad == Matrix::Ones(2, 2));
}

TEST_CASE("backward: squared Frobenius norm gives 2W") {
  Matrix v(2, 2);
  v << 1, 2, 3, 4;
  Tensor w("w", v);
  w.zero_grad();
  Tape tape;
  tape.backward(ops::sum(ops::square(tape.leaf(w))));
  Matrix expect(2, 2);
  expect << 2, 4, 6, 8;
  CHECK(w.grad == expect);
}

TEST_CASE("backward: disconnected leaf keeps a zero gradient") {
  Tensor w("w", Matrix::Random(3, 2));
  Tensor u("u", Matrix::Random(2, 2));
  w.zero_grad();
  u.zero_grad();
  Tape tape;
  tape.leaf(w);
  tape.backward(ops::sum(tape.leaf(u)));
  CHECK(w.grad.isZero(0.0));
}

TEST_CASE("backward: contract errors") {
  Tensor w("w", Matrix::Ones(2, 2));
  SUBCASE("non-scalar loss") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.leaf(w)), ContractError);
  }
  SUBCASE("twice") {
    Tape tape;
    const Var l = ops::sum(tape.leaf(w));
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), ContractError);
  }
  SUBCASE("empty tape") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(Var()), ContractError);
  }
}

TEST_CASE("backward: a shared input receives both adjoints") {
  Tensor w("w", Matrix::Constant(1, 1, 3.0));
  w.zero_grad();
  Tape tape;
  const Var x = tape.leaf(w);
  tape.backward(ops::sum(ops::hadamard(x, x)));  // d(x^2) = 2x
  CHECK(w.grad(0, 0) == 6.0);
}

TEST_CASE("grad_check: examples") {
  std::mt19937_64 rng(3);
  Tensor w("w", random_matrix(4, 3, rng));
  CHECK(check([](Tape&, const Var& x) { return ops::sum(ops::square(x)); }, w) <= 1e-6);

  Tensor* params[] = {&w};
  const auto r = grad_check([](Tape& t) { return t.constant(Matrix::Constant(1, 1, 2.0)); }, params);
  CHECK(r.max_relative_error == 0.0);
}

TEST_CASE("grad_check: unseeded randomness is rejected") {
  Tensor w("w", Matrix::Ones(3, 3));
  Tensor* params[] = {&w};
  std::mt19937_64 outside(1);
  auto noisy = [&](Tape& t) {
    return ops::sum(ops::scale(t.leaf(w), 1.0 + std::uniform_real_distribution<double>(0, 1)(outside)));
  };
  CHECK_THROWS_AS(grad_check(noisy, params), ContractError);
}

TEST_CASE("grad_check: step outside [1e-7, 1e-4] is a contract error") {
  Tensor w("w", Matrix::Ones(2, 2));
  Tensor* params[] = {&w};
  GradCheckOptions opts;
  opts.step = 1e-2;
  CHECK_THROWS_AS(grad_check([&](Tape& t) { return ops::sum(t.leaf(w)); }, params, opts), ContractError);
}

TEST_CASE("primitive adjoints match finite differences") {
  std::mt19937_64 rng(11);
  Tensor a("a", random_matrix(4, 3, rng));
  Tensor b("b", random_matrix(3, 5, rng));
  Tensor c("c", random_matrix(4, 3, rng));
  Tensor pos("pos", random_matrix(4, 3, rng, 0.5, 2.0));
  Tensor col("col", random_matrix(4, 1, rng, 0.5, 2.0));
  Tensor row("row", random_matrix(1, 3, rng, 0.5, 2.0));
  Tensor sq("sq", random_matrix(4, 4, rng));
  // weights keep the outputs from being plain sums
  const Matrix probe = random_matrix(4, 5, rng);
  const Matrix probe43 = random_matrix(4, 3, rng);
  const Matrix probe34 = random_matrix(3, 4, rng);
  const Matrix probe41 = random_matrix(4, 1, rng);
  auto weighted = [](Tape& t, const Var& v, const Matrix& w) { return ops::sum(ops::hadamard(v, t.constant(w))); };

  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::matmul(x, y), probe); }, a, b) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::transpose(x), probe34); }, a) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::add(x, y), probe43); }, a, c) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::sub(x, y), probe43); }, a, c) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::hadamard(x, y), probe43); }, a, c) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::divide(x, y), probe43); }, a, pos) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::scale(x, -2.5), probe43); }, a) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::combine(x, 0.3, y, -1.7), probe43); }, a, c) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::scale_rows(x, y), probe43); }, a, col) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::divide_rows(x, y), probe43); }, a, col) <= 1e-6);
  CHECK(check2([&](Tape& t, const Var& x, const Var& y) { return weighted(t, ops::scale_cols(x, y), probe43); }, a, row) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::row_sum(x), probe41); }, a) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::relu(x), probe43); }, a) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::log(x), probe43); }, pos) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::sqrt(x), probe43); }, pos) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::square(x), probe43); }, a) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::maximum(x, 0.1), probe43); }, a) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::threshold_mask(x, 0.2), probe43); }, a) <= 1e-6);
  CHECK(check2([&](Tape&, const Var& x, const Var& m) { return ops::trace_quadratic(x, m); }, c, sq) <= 1e-6);

  const std::vector<int> labels{0, 2, 1, 2};
  const std::vector<Index> rows{0, 1, 3};
  CHECK(check([&](Tape&, const Var& x) { return ops::softmax_cross_entropy(x, labels, rows); }, a) <= 1e-6);
  CHECK(check([&](Tape& t, const Var& x) { return weighted(t, ops::dropout(x, 0.4, true), probe43); }, a) <= 1e-6);
}

TEST_CASE("sparse adjoints match finite differences") {
  std::mt19937_64 rng(5);
  const Matrix pattern = testing::random_symmetric(6, rng, 0.5) + Matrix::Identity(6, 6);
  Tensor x("x", random_matrix(6, 3, rng));
  Tensor w("w", random_matrix(6, 6, rng, 0.1, 1.0));
  const Matrix mask = (pattern.array() > 0.0).cast<double>().matrix();
  const SparseMatrix sp_mask = mask.sparseView();
  const Matrix probe = random_matrix(6, 3, rng);

  // sparse adjacency built on the tape from a dense parameter through a fixed pattern
  auto as_sparse = [&](Tape& t, const Var& dense) {
    SparseMatrix value = sp_mask;
    for (Index r = 0; r < value.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(value, r); it; ++it) it.valueRef() = dense.value()(it.row(), it.col());
    return t.record_sparse("gather", value, {dense}, [](const SparseMatrix& out, const Matrix& g, GradSlots d) {
      if (!d[0]) return;
      Index k = 0;
      for (Index r = 0; r < out.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(out, r); it; ++it, ++k) (*d[0])(it.row(), it.col()) += g(k, 0);
    });
  };
  Tensor* params[] = {&w, &x};
  const auto spmm = grad_check(
      [&](Tape& t) {
        const Var a = as_sparse(t, t.leaf(w));
        return ops::sum(ops::hadamard(ops::matmul(a, t.leaf(x)), t.constant(probe)));
      },
      params);
  CHECK(spmm.max_relative_error <= 1e-6);

  Tensor w2("w2", random_matrix(6, 6, rng, 0.1, 1.0));
  const Matrix probe66 = random_matrix(6, 6, rng);
  Tensor* two[] = {&w, &w2};
  const auto comb = grad_check(
      [&](Tape& t) {
        const Var c = ops::combine(as_sparse(t, t.leaf(w)), 0.4, as_sparse(t, t.leaf(w2)), -1.3);
        return ops::sum(ops::hadamard(ops::matmul(c, t.constant(Matrix::Identity(6, 6))), t.constant(probe66)));
      },
      two);
  CHECK(comb.max_relative_error <= 1e-6);
}

TEST_CASE("sparse and dense combine agree") {
  std::mt19937_64 rng(8);
  const Matrix a = testing::random_symmetric(7, rng, 0.4);
  const Matrix b = testing::random_symmetric(7, rng, 0.4);
  Tape tape;
  const Var sa = tape.constant(SparseMatrix(a.sparseView()));
  const Var sb = tape.constant(SparseMatrix(b.sparseView()));
  const Matrix got = ops::combine(sa, 0.25, sb, 0.75).dense();
  CHECK(max_abs_diff(got, 0.25 * a + 0.75 * b) <= 1e-15);
  CHECK_THROWS_AS(ops::combine(sa, 1.0, tape.constant(a), 1.0), ContractError);
}

TEST_CASE("dropout: mask reused in backward, resampled per pass, deterministic per seed") {
  Tensor w("w", Matrix::Ones(20, 20));
  auto run = [&](std::uint64_t seed) {
    w.zero_grad();
    Tape tape(seed);
    const Var x = tape.leaf(w);
    const Var first = ops::dropout(x, 0.5, true);
    const Var second = ops::dropout(x, 0.5, true);
    tape.backward(ops::sum(first));
    return std::make_tuple(first.value(), second.value(), w.grad);
  };
  const auto [f1, s1, g1] = run(42);
  const auto [f2, s2, g2] = run(42);
  CHECK(f1 == f2);
  CHECK(g1 == g2);
  CHECK(f1 != s1);
  // inverted dropout: kept entries scale by 1/(1-p), and the gradient follows the mask
  CHECK(g1 == f1);
  CHECK(((f1.array() == 0.0) || (f1.array() == 2.0)).all());

  Tape eval;
  const Var x = eval.leaf(w);
  CHECK(ops::dropout(x, 0.5, false).value() == w.value);
}

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
  Tensor w("w", Matrix::Random(3, 3));
  const Matrix before = w.value;
  Adam adam({&w}, {});
  adam.zero_grad();
  adam.step();
  CHECK(w.value == before);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: first step closed form") {
  Matrix v(1, 3);
  v << 0.5, -1.0, 2.0;
  Tensor w("w", v);
  Matrix g(1, 3);
  g << 0.2, -3.0, 1e-3;
  AdamOptions opts;
  opts.learning_rate = 0.01;
  Adam adam({&w}, opts);
  w.grad = g;
  adam.step();
  for (Index j = 0; j < 3; ++j) {
    // m_hat = g, v_hat = g^2 after bias correction
    const double expect = v(0, j) - 0.01 * g(0, j) / (std::abs(g(0, j)) + 1e-8);
    CHECK(w.value(0, j) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("adam: weight decay adds decay * w to the raw gradient") {
  Matrix v(1, 2);
  v << 3.0, -4.0;
  Matrix g(1, 2);
  g << 0.1, 0.2;
  AdamOptions decayed;
  decayed.weight_decay = 5e-4;
  Tensor a("a", v);
  Adam adam_a({&a}, decayed);
  a.grad = g;
  adam_a.step();

  Tensor b("b", v);
  Adam adam_b({&b}, {});
  b.grad = g + 5e-4 * v;
  adam_b.step();
  CHECK(a.value == b.value);
  CHECK(adam_a.first_moment(0) == adam_b.first_moment(0));
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  Tensor w("layer_weights", Matrix::Ones(2, 2));
  Adam adam({&w}, {});
  w.grad = Matrix::Zero(2, 2);
  w.grad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam.step();
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layer_weights") != std::string::npos);
  }
}

TEST_CASE("tensor helpers") {
  std::mt19937_64 rng(2);
  Matrix s = random_matrix(300, 300, rng);
  Matrix m = s;
  mirror_upper(m);
  CHECK(max_asymmetry(m) == 0.0);
  CHECK(m.triangularView<Eigen::Upper>().toDenseMatrix() == s.triangularView<Eigen::Upper>().toDenseMatrix());
  CHECK(max_abs_diff(plus_transpose(s), Matrix(s + s.transpose())) == 0.0);

  const Matrix a = testing::random_symmetric(40, rng, 0.2);
  const Matrix b = testing::random_symmetric(40, rng, 0.2);
  const SparseMatrix sa = a.sparseView();
  const SparseMatrix sb = b.sparseView();
  CHECK(squared_distance(sa, sb) == doctest::Approx((a - b).squaredNorm()).epsilon(1e-14));
  CHECK(max_asymmetry(sa) == 0.0);
  Matrix skew = a;
  skew(3, 7) += 0.5;
  CHECK(max_asymmetry(SparseMatrix(skew.sparseView())) == max_asymmetry(skew));
}
