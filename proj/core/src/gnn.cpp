#include "itergraph/gnn.hpp"

#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/ops.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace itergraph {

Matrix normalize_initial(const Matrix& initial_adjacency) {
  const Index n = initial_adjacency.rows();
  require(initial_adjacency.cols() == n, "normalize_initial: adjacency must be square");
  Matrix a = initial_adjacency;
  a.diagonal().array() += 1.0;
  const Vector inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

namespace {

MixedAdjacency sparse_mix_with_initial(const Var& learned, const Var& normalized_initial,
                                       double lambda) {
  require(normalized_initial.is_sparse(), "mix_with_initial: a sparse graph needs a sparse L0");
  const SparseMatrix& a = learned.sparse();
  const SparseMatrix& l0 = normalized_initial.sparse();
  require(a.rows() == a.cols() && l0.rows() == a.rows() && l0.cols() == a.cols(),
          "mix_with_initial: shape mismatch");
  if (lambda == 1.0) return {normalized_initial, MixProvenance::with_initial};

  const Index n = a.rows();
  const auto* outer = a.outerIndexPtr();
  const double* av = a.valuePtr();
  std::vector<std::uint8_t> nonzero(static_cast<std::size_t>(n));
  Vector inv(n);
  for (Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Index k = outer[i]; k < outer[i + 1]; ++k) row += av[k];
    nonzero[static_cast<std::size_t>(i)] = row > 0.0 ? 1 : 0;
    inv(i) = row > 0.0 ? 1.0 / row : 0.0;
  }
  learned.tape()->note_branches(nonzero);

  SparseUnion u = sparse_union(a, l0);
  double* out = u.pattern.valuePtr();
  for (Index i = 0; i < n; ++i)
    for (Index k = outer[i]; k < outer[i + 1]; ++k)
      out[u.from_a[static_cast<std::size_t>(k)]] = (1.0 - lambda) * (inv(i) * av[k]);
  if (lambda != 0.0)
    for (Index k = 0; k < l0.nonZeros(); ++k) out[u.from_b[static_cast<std::size_t>(k)]] += lambda * l0.valuePtr()[k];

  const SparseMatrix* ap = &a;
  const Var mixed = learned.tape()->record_sparse(
      "mix_with_initial", std::move(u.pattern), {learned, normalized_initial},
      [ap, inv, lambda, from_a = std::move(u.from_a), from_b = std::move(u.from_b)](
          const SparseMatrix&, const Matrix& g, GradSlots d) {
        if (d[0]) {
          // rownorm backward: (g_ij - sum_k g_ik p_ik) / s_i with p = A / s.
          const auto* o = ap->outerIndexPtr();
          const double* v = ap->valuePtr();
          double* da = d[0]->data();
          for (Index i = 0; i < ap->rows(); ++i) {
            double gp = 0.0;
            for (Index k = o[i]; k < o[i + 1]; ++k) gp += g(from_a[static_cast<std::size_t>(k)], 0) * v[k];
            gp *= inv(i);
            for (Index k = o[i]; k < o[i + 1]; ++k)
              da[k] += (1.0 - lambda) * (inv(i) * (g(from_a[static_cast<std::size_t>(k)], 0) - gp));
          }
        }
        if (d[1])
          for (std::size_t k = 0; k < from_b.size(); ++k)
            (*d[1])(static_cast<Index>(k), 0) += lambda * g(from_b[k], 0);
      });
  return {mixed, MixProvenance::with_initial};
}

}  // namespace

MixedAdjacency mix_with_initial(const Var& learned, const Var& normalized_initial, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "mix_with_initial: lambda must lie in [0, 1]");
  if (learned.is_sparse()) return sparse_mix_with_initial(learned, normalized_initial, lambda);
  const Matrix& a = learned.value();
  const Matrix& l0 = normalized_initial.value();
  require(a.rows() == a.cols() && l0.rows() == a.rows() && l0.cols() == a.cols(),
          "mix_with_initial: shape mismatch");
  if (lambda == 1.0) return {normalized_initial, MixProvenance::with_initial};

  const Index n = a.rows();
  const Vector row_sums = a.rowwise().sum();
  std::vector<std::uint8_t> nonzero(static_cast<std::size_t>(n));
  Vector inv(n);
  for (Index i = 0; i < n; ++i) {
    nonzero[static_cast<std::size_t>(i)] = row_sums(i) > 0.0 ? 1 : 0;
    inv(i) = row_sums(i) > 0.0 ? 1.0 / row_sums(i) : 0.0;
  }
  learned.tape()->note_branches(nonzero);

  Matrix out = (1.0 - lambda) * (inv.asDiagonal() * a);
  if (lambda != 0.0) out += lambda * l0;

  const Matrix* ap = &a;
  const Var mixed = learned.tape()->record(
      "mix_with_initial", std::move(out), {learned, normalized_initial},
      [ap, inv, lambda](const Matrix&, const Matrix& g, GradSlots d) {
        if (d[0]) {
          // rownorm backward: (g_ij - sum_k g_ik p_ik) / s_i with p = A / s.
          const Vector gp = (g.cwiseProduct(*ap)).rowwise().sum().cwiseProduct(inv);
          Matrix da = g;
          da.colwise() -= gp;
          *d[0] += (1.0 - lambda) * (inv.asDiagonal() * da);
        }
        if (d[1]) *d[1] += lambda * g;
      });
  return {mixed, MixProvenance::with_initial};
}

MixedAdjacency mix_iterations(const MixedAdjacency& current, const MixedAdjacency& initial,
                              double eta) {
  require(eta >= 0.0 && eta <= 1.0, "mix_iterations: eta must lie in [0, 1]");
  if (eta == 1.0) return {current.matrix, MixProvenance::across_iterations};
  if (eta == 0.0) return {initial.matrix, MixProvenance::across_iterations};
  return {ops::combine(current.matrix, eta, initial.matrix, 1.0 - eta),
          MixProvenance::across_iterations};
}

GcnParams make_gcn_params(Index input_dim, Index hidden, Index classes, std::mt19937_64& rng) {
  require(input_dim >= 1 && hidden >= 1 && classes >= 1, "make_gcn_params: dimensions must be positive");
  auto glorot = [&rng](Index fan_in, Index fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(fan_in, fan_out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    return w;
  };
  Matrix w1 = glorot(input_dim, hidden);
  Matrix w2 = glorot(hidden, classes);
  return GcnParams{Tensor("gcn.w1", std::move(w1)), Tensor("gcn.w2", std::move(w2))};
}

namespace {

void check_finite(const Var& v, const char* where) {
  if (!v.value().allFinite())
    throw NumericalError(std::string("gcn_forward: non-finite values after ") + where);
}

}  // namespace

GcnOutput gcn_forward(const Var& adjacency, const Var& features, const Var& w1, const Var& w2,
                      double dropout, bool training) {
  require(adjacency.rows() == adjacency.cols() && adjacency.rows() == features.rows(),
          "gcn_forward: adjacency must be n x n for n feature rows");
  require(features.cols() == w1.rows() && w1.cols() == w2.rows(), "gcn_forward: weight shapes do not chain");
  const Var hidden = ops::relu(ops::matmul(adjacency, ops::matmul(features, w1)));
  check_finite(hidden, "layer 1");
  const Var z = ops::dropout(hidden, dropout, training);
  const Var logits = ops::matmul(adjacency, ops::matmul(z, w2));
  check_finite(logits, "layer 2");
  return {z, logits};
}

Var prediction_loss(const Var& logits, std::span<const int> labels, std::span<const Index> mask) {
  require(!mask.empty(), "prediction_loss: empty node mask");
  return ops::softmax_cross_entropy(logits, labels, mask);
}

}  // namespace itergraph
