#include "helpers.hpp"

#include "itergraph/graphreg.hpp"
#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/grad_check.hpp"
#include "itergraph/numkit/ops.hpp"

#include <doctest.h>

#include <cmath>

using namespace itergraph;
using testing::random_matrix;
using testing::random_symmetric;

namespace {

double energy(const Matrix& a, const Matrix& x) {
  Tape tape;
  return dirichlet_energy(tape.constant(a), tape.constant(x)).scalar();
}

// (1/2n^2) sum_ij A_ij |x_i - x_j|^2, one pair at a time
double energy_oracle(const Matrix& a, const Matrix& x) {
  const double n = static_cast<double>(a.rows());
  double total = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) total += a(i, j) * (x.row(i) - x.row(j)).squaredNorm();
  return total / (2.0 * n * n);
}

double conn(const Matrix& a, double beta, double gamma, RegDiagnostics* diag = nullptr) {
  Tape tape;
  return connectivity_sparsity(tape.constant(a), beta, gamma, diag).scalar();
}

double conn_oracle(const Matrix& a, double beta, double gamma) {
  const double n = static_cast<double>(a.rows());
  double logs = 0.0;
  for (Index i = 0; i < a.rows(); ++i) logs += std::log(std::max(a.row(i).sum(), kDegreeFloor));
  return -beta / n * logs + gamma / (n * n) * a.squaredNorm();
}

}  // namespace

TEST_CASE("dirichlet_energy: examples") {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(5, 3, rng);
  CHECK(energy(Matrix::Zero(5, 5), x) == 0.0);
  const Matrix constant = Matrix::Constant(5, 3, 0.7);
  CHECK(std::abs(energy(random_symmetric(5, rng), constant)) <= 1e-15);

  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  Matrix xs(2, 1);
  xs << 0, 2;
  CHECK(energy(a, xs) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dirichlet_energy: trace form equals the double loop on 100 instances") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 17;
    const Matrix a = random_symmetric(n, rng, 0.6);
    const Matrix x = random_matrix(n, 1 + trial % 6, rng, -3.0, 3.0);
    const double want = energy_oracle(a, x);
    const double got = energy(a, x);
    CHECK(got >= 0.0);
    if (want != 0.0) worst = std::max(worst, std::abs(got - want) / std::abs(want));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("dirichlet_energy: sparse adjacency, with and without Gram lookups") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 5 + trial;
    const Matrix a = random_symmetric(n, rng, 0.3);
    const Matrix x = random_matrix(n, 4, rng);
    const Matrix gram = x * x.transpose();
    Tape tape;
    const Var sa = tape.constant(SparseMatrix(a.sparseView()));
    const Var xv = tape.constant(x);
    const double want = energy_oracle(a, x);
    CHECK(dirichlet_energy(sa, xv).scalar() == doctest::Approx(want).epsilon(1e-12));
    CHECK(dirichlet_energy(sa, xv, &gram).scalar() == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dirichlet_energy: asymmetric adjacency is rejected") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(energy(a, Matrix::Ones(3, 2)), ContractError);
  Tape tape;
  CHECK_THROWS_AS(dirichlet_energy(tape.constant(SparseMatrix(a.sparseView())), tape.constant(Matrix::Ones(3, 2))),
                  ContractError);
}

TEST_CASE("connectivity_sparsity: examples") {
  std::mt19937_64 rng(4);
  const Matrix a = random_symmetric(6, rng);
  CHECK(conn(a, 0.0, 0.0) == 0.0);
  CHECK(conn(Matrix::Identity(2, 2), 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  Matrix stochastic(3, 3);
  stochastic << 0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5;
  CHECK(std::abs(conn(stochastic, 0.7, 0.0)) <= 1e-16);

  for (int trial = 0; trial < 10; ++trial) {
    const Matrix r = random_symmetric(8, rng, 0.7);
    CHECK(conn(r, 0.3, 0.2) == doctest::Approx(conn_oracle(r, 0.3, 0.2)).epsilon(1e-13));
  }
}

TEST_CASE("connectivity_sparsity: floored degrees are finite and reported") {
  RegDiagnostics diag;
  const double f = conn(Matrix::Zero(4, 4), 0.1, 0.0, &diag);
  CHECK(std::isfinite(f));
  CHECK(f == doctest::Approx(-0.1 * std::log(kDegreeFloor)).epsilon(1e-14));
  CHECK(f > 1.0);
  CHECK(diag.floored_degrees == 4);
}

TEST_CASE("connectivity_sparsity: log barrier decreases in any single degree") {
  std::mt19937_64 rng(5);
  const Matrix a = random_symmetric(6, rng, 0.8);
  const double base = conn(a, 0.5, 0.0);
  for (Index i = 0; i < 6; ++i) {
    Matrix bumped = a;
    bumped(i, (i + 1) % 6) += 0.05;
    CHECK(conn(bumped, 0.5, 0.0) < base);
  }
}

TEST_CASE("graph_reg_loss: sum of component oracles") {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  Matrix x(2, 1);
  x << 0, 2;
  Tape tape;
  const Var av = tape.constant(a);
  const Var xv = tape.constant(x);
  CHECK(graph_reg_loss(av, xv, {0.0, 0.0, 0.0}).scalar() == 0.0);
  const double want = 1.0 * energy_oracle(a, x) + conn_oracle(a, 0.0, 1.0);
  CHECK(graph_reg_loss(av, xv, {1.0, 0.0, 1.0}).scalar() == doctest::Approx(want).epsilon(1e-15));
  CHECK(want == doctest::Approx(1.5));
  CHECK_THROWS_AS(GraphRegWeights({-0.1, 0.0, 0.0}).validate(), ContractError);
}

TEST_CASE("graph regularization gradients") {
  std::mt19937_64 rng(7);
  const Index n = 6;
  // parameterize a symmetric adjacency as P + P^T so finite differences stay
  // symmetric; the diagonal is masked since its smoothness gradient is exactly 0
  Tensor p("p", random_matrix(n, n, rng, 0.1, 1.0));
  Tensor x("x", random_matrix(n, 3, rng));
  const Matrix off_diagonal = Matrix::Ones(n, n) - Matrix::Identity(n, n);
  auto adjacency = [&](Tape& t, const Var& raw) {
    return ops::hadamard(ops::add(raw, ops::transpose(raw)), t.constant(off_diagonal));
  };
  Tensor* params[] = {&p, &x};

  const auto omega = grad_check([&](Tape& t) { return dirichlet_energy(adjacency(t, t.leaf(p)), t.leaf(x)); }, params);
  CHECK(omega.max_relative_error <= 1e-6);
  const auto f = grad_check(
      [&](Tape& t) { return connectivity_sparsity(adjacency(t, t.leaf(p)), 0.4, 0.3); }, params);
  CHECK(f.max_relative_error <= 1e-6);
  const auto total = grad_check(
      [&](Tape& t) { return graph_reg_loss(adjacency(t, t.leaf(p)), t.leaf(x), {0.2, 0.4, 0.3}); }, params);
  CHECK(total.max_relative_error <= 1e-6);
}

TEST_CASE("sparse graph regularization matches the dense gradients") {
  std::mt19937_64 rng(8);
  const Index n = 12;
  const Matrix a0 = random_symmetric(n, rng, 0.4);
  const Matrix x0 = random_matrix(n, 3, rng);
  const Matrix gram = x0 * x0.transpose();
  const GraphRegWeights w{0.3, 0.2, 0.1};

  Tensor ad("a", a0), xd("x", x0);
  ad.zero_grad();
  xd.zero_grad();
  Tape dense;
  const Var ld = graph_reg_loss(dense.leaf(ad), dense.leaf(xd), w);
  dense.backward(ld);

  // sparse adjacency leaf via a gather from a dense tensor
  Tensor as("a", a0), xs("x", x0);
  as.zero_grad();
  xs.zero_grad();
  Tape sparse;
  const Var dense_a = sparse.leaf(as);
  const SparseMatrix pattern = a0.sparseView();
  const Var sa = sparse.record_sparse("gather", pattern, {dense_a}, [](const SparseMatrix& out, const Matrix& g, GradSlots d) {
    Index k = 0;
    for (Index r = 0; r < out.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(out, r); it; ++it, ++k) (*d[0])(it.row(), it.col()) += g(k, 0);
  });
  const Var ls = graph_reg_loss(sa, sparse.leaf(xs), w, nullptr, &gram);
  CHECK(ls.scalar() == doctest::Approx(ld.scalar()).epsilon(1e-13));
  sparse.backward(ls);
  CHECK(max_abs_diff(xs.grad, xd.grad) <= 1e-14);
  // only stored entries carry gradient on the sparse side
  const Matrix stored = (a0.array() != 0.0).select(ad.grad, 0.0);
  CHECK(max_abs_diff(as.grad, stored) <= 1e-14);
}
