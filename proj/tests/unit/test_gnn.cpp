#include "helpers.hpp"

#include "itergraph/gnn.hpp"
#include "itergraph/metric.hpp"
#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/grad_check.hpp"
#include "itergraph/numkit/ops.hpp"

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <numeric>

using namespace itergraph;
using testing::random_matrix;
using testing::random_symmetric;

namespace {

Matrix mixed(const Matrix& a, const Matrix& l0, double lambda) {
  Tape tape;
  return mix_with_initial(tape.constant(a), tape.constant(l0), lambda).matrix.value();
}

}  // namespace

TEST_CASE("normalize_initial: examples") {
  CHECK(normalize_initial(Matrix::Zero(3, 3)) == Matrix::Identity(3, 3));
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  CHECK(max_abs_diff(normalize_initial(a), Matrix::Constant(2, 2, 0.5)) <= 1e-15);

  std::mt19937_64 rng(1);
  const Matrix g = testing::random_binary_graph(15, rng, 0.3);
  const Matrix l0 = normalize_initial(g);
  CHECK(max_asymmetry(l0) <= 1e-16);
  // oracle: D^{-1/2} (A + I) D^{-1/2} entry by entry
  const Matrix with_loops = g + Matrix::Identity(15, 15);
  const Vector deg = with_loops.rowwise().sum();
  for (Index i = 0; i < 15; ++i)
    for (Index j = 0; j < 15; ++j)
      CHECK(l0(i, j) == doctest::Approx(with_loops(i, j) / std::sqrt(deg(i) * deg(j))).epsilon(1e-15));
}

TEST_CASE("mix_with_initial: examples") {
  std::mt19937_64 rng(2);
  const Matrix a = random_symmetric(5, rng);
  const Matrix l0 = normalize_initial(testing::random_binary_graph(5, rng, 0.5));
  CHECK(mixed(a, l0, 1.0) == l0);

  const Matrix r = mixed(a, l0, 0.0);
  for (Index i = 0; i < 5; ++i)
    if (a.row(i).sum() > 0.0) CHECK(r.row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));

  Matrix two(2, 2);
  two << 0, 2, 2, 0;
  CHECK(mixed(two, Matrix::Identity(2, 2), 0.5) == Matrix::Constant(2, 2, 0.5));
}

TEST_CASE("mix_with_initial: zero rows stay zero, row sums follow the linear identity") {
  Matrix a = Matrix::Zero(4, 4);
  a(0, 1) = a(1, 0) = 0.4;
  a(2, 3) = a(3, 2) = 0.9;
  a(1, 1) = 0.2;
  Matrix isolated = a;
  isolated.row(3).setZero();
  isolated.col(3).setZero();
  isolated.row(2).setZero();
  isolated.col(2).setZero();
  const Matrix l0 = Matrix::Identity(4, 4);
  const Matrix r = mixed(isolated, l0, 0.0);
  CHECK(r.row(2).isZero(0.0));
  CHECK(r.row(3).isZero(0.0));

  std::mt19937_64 rng(3);
  const Matrix dense = random_symmetric(6, rng, 1.0);
  const Matrix l0b = normalize_initial(testing::random_binary_graph(6, rng, 0.5));
  const double lambda = 0.35;
  const Matrix m = mixed(dense, l0b, lambda);
  for (Index i = 0; i < 6; ++i)
    CHECK(m.row(i).sum() == doctest::Approx(lambda * l0b.row(i).sum() + (1.0 - lambda)).epsilon(1e-14));
  CHECK((m.array() >= 0.0).all());
}

TEST_CASE("mix_with_initial: sparse and dense agree") {
  std::mt19937_64 rng(4);
  const Matrix a = random_symmetric(9, rng, 0.4);
  const Matrix l0 = normalize_initial(testing::random_binary_graph(9, rng, 0.3));
  for (double lambda : {0.0, 0.3, 1.0}) {
    Tape tape;
    const Var sa = tape.constant(SparseMatrix(a.sparseView()));
    const Var sl = tape.constant(SparseMatrix(l0.sparseView()));
    CHECK(max_abs_diff(mix_with_initial(sa, sl, lambda).matrix.dense(), mixed(a, l0, lambda)) <= 1e-15);
  }
  Tape tape;
  CHECK_THROWS_AS(mix_with_initial(tape.constant(SparseMatrix(a.sparseView())), tape.constant(l0), 0.5), ContractError);
  CHECK_THROWS_AS(mixed(a, l0, 1.5), ContractError);
}

TEST_CASE("mix_iterations: examples") {
  std::mt19937_64 rng(5);
  Tape tape;
  const MixedAdjacency cur{tape.constant(random_matrix(4, 4, rng, 0.0, 1.0)), MixProvenance::with_initial};
  const MixedAdjacency init{tape.constant(random_matrix(4, 4, rng, 0.0, 1.0)), MixProvenance::with_initial};
  CHECK(mix_iterations(cur, init, 0.0).matrix.value() == init.matrix.value());
  CHECK(mix_iterations(cur, init, 1.0).matrix.value() == cur.matrix.value());
  const MixedAdjacency half = mix_iterations(cur, init, 0.5);
  CHECK(half.provenance == MixProvenance::across_iterations);
  CHECK(max_abs_diff(half.matrix.value(), 0.5 * (cur.matrix.value() + init.matrix.value())) <= 1e-16);
}

TEST_CASE("gcn_forward: zero weights give uniform predictions") {
  std::mt19937_64 rng(6);
  Tape tape;
  const Var a = tape.constant(normalize_initial(testing::random_binary_graph(5, rng, 0.5)));
  const Var x = tape.constant(random_matrix(5, 3, rng));
  const GcnOutput out = gcn_forward(a, x, tape.constant(Matrix::Zero(3, 4)), tape.constant(Matrix::Zero(4, 3)), 0.5, true);
  const Matrix p = ops::softmax_rows(out.logits.value());
  CHECK(max_abs_diff(p, Matrix::Constant(5, 3, 1.0 / 3.0)) <= 1e-16);
  const std::vector<int> labels{0, 1, 2, 1, 0};
  const std::vector<Index> mask{0, 2, 4};
  CHECK(prediction_loss(out.logits, labels, mask).scalar() == doctest::Approx(std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("gcn_forward: probabilities sum to one") {
  std::mt19937_64 rng(7);
  Tape tape;
  const Var a = tape.constant(normalize_initial(testing::random_binary_graph(8, rng, 0.4)));
  const Var x = tape.constant(random_matrix(8, 5, rng, -4, 4));
  const GcnOutput out = gcn_forward(a, x, tape.constant(random_matrix(5, 6, rng, -3, 3)),
                                    tape.constant(random_matrix(6, 4, rng, -3, 3)), 0.0, false);
  const Matrix p = ops::softmax_rows(out.logits.value());
  for (Index i = 0; i < 8; ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
}

TEST_CASE("gcn_forward: identity adjacency reduces to a per-node MLP") {
  Matrix x(3, 2);
  x << 1, -1, 0.5, 2, -3, 0.25;
  Matrix w1(2, 3);
  w1 << 0.2, -0.4, 1.0, 0.7, 0.1, -0.3;
  Matrix w2(3, 2);
  w2 << 1, -1, 0.5, 0.5, -2, 0.3;
  Tape tape;
  const GcnOutput out = gcn_forward(tape.constant(Matrix::Identity(3, 3)), tape.constant(x), tape.constant(w1),
                                    tape.constant(w2), 0.5, false);
  for (Index i = 0; i < 3; ++i) {
    // hand-rolled MLP on node i alone
    double hidden[3];
    for (int h = 0; h < 3; ++h) hidden[h] = std::max(0.0, x(i, 0) * w1(0, h) + x(i, 1) * w1(1, h));
    for (int c = 0; c < 2; ++c) {
      double logit = 0.0;
      for (int h = 0; h < 3; ++h) logit += hidden[h] * w2(h, c);
      CHECK(out.logits.value()(i, c) == doctest::Approx(logit).epsilon(1e-15));
    }
  }
}

TEST_CASE("gcn_forward: permutation equivariance") {
  std::mt19937_64 rng(8);
  const Matrix a = normalize_initial(testing::random_binary_graph(7, rng, 0.4));
  const Matrix x = random_matrix(7, 3, rng);
  const Matrix w1 = random_matrix(3, 4, rng);
  const Matrix w2 = random_matrix(4, 2, rng);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix p = Matrix::Zero(7, 7);
  for (Index i = 0; i < 7; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  Tape tape;
  const GcnOutput base = gcn_forward(tape.constant(a), tape.constant(x), tape.constant(w1), tape.constant(w2), 0.5, false);
  const GcnOutput moved = gcn_forward(tape.constant(p * a * p.transpose()), tape.constant(p * x), tape.constant(w1),
                                      tape.constant(w2), 0.5, false);
  CHECK(max_abs_diff(moved.embedding.value(), p * base.embedding.value()) <= 1e-14);
  CHECK(max_abs_diff(moved.logits.value(), p * base.logits.value()) <= 1e-14);
}

TEST_CASE("prediction_loss: matches the per-node oracle exactly, empty mask rejected") {
  std::mt19937_64 rng(9);
  const Matrix logits = random_matrix(10, 4, rng, -5, 5);
  const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
  const std::vector<Index> mask{1, 4, 5, 9};
  Tape tape;
  const double got = prediction_loss(tape.constant(logits), labels, mask).scalar();
  const Matrix p = ops::softmax_rows(logits);
  double total = 0.0;
  for (Index i : mask) total += -std::log(p(i, labels[static_cast<std::size_t>(i)]));
  const double want = total / static_cast<double>(mask.size());
  CHECK(got == doctest::Approx(want).epsilon(1e-15));

  Matrix confident = Matrix::Zero(3, 2);
  confident(0, 0) = confident(1, 1) = confident(2, 0) = 60.0;
  const std::vector<int> right{0, 1, 0};
  const std::vector<Index> all{0, 1, 2};
  CHECK(prediction_loss(tape.constant(confident), right, all).scalar() <= 1e-25);
  CHECK_THROWS_AS(prediction_loss(tape.constant(logits), labels, std::vector<Index>{}), ContractError);
}

TEST_CASE("end-to-end gradient through mix, gcn and loss on 6 nodes") {
  std::mt19937_64 rng(10);
  const Matrix x0 = random_matrix(6, 4, rng);
  const Matrix l0 = normalize_initial(testing::random_binary_graph(6, rng, 0.5));
  Tensor metric("metric", random_matrix(2, 4, rng, 0.1, 1.0));
  Tensor w1("w1", random_matrix(4, 5, rng));
  Tensor w2("w2", random_matrix(5, 3, rng));
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  const std::vector<Index> mask{0, 1, 3, 5};
  Tensor* params[] = {&metric, &w1, &w2};
  const auto r = grad_check(
      [&](Tape& t) {
        const Var x = t.constant(x0);
        const Var a = epsilon_sparsify(multi_head_cosine(x, t.leaf(metric)), 0.1);
        const MixedAdjacency m = mix_with_initial(a, t.constant(l0), 0.4);
        const GcnOutput out = gcn_forward(m.matrix, x, t.leaf(w1), t.leaf(w2), 0.5, true);
        return prediction_loss(out.logits, labels, mask);
      },
      params);
  CHECK(r.max_relative_error <= 1e-4);
  CHECK(r.checked > 0);
}
