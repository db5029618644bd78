#include "itergraph/graphreg.hpp"

#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/ops.hpp"

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <vector>

namespace itergraph {

void GraphRegWeights::validate() const {
  require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0,
          "graph regularization weights must be nonnegative");
}

namespace {

Vector row_sums(const SparseMatrix& a) {
  Vector out = Vector::Zero(a.rows());
  for (Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) out(i) += it.value();
  return out;
}

Var sparse_dirichlet_energy(const Var& adjacency, const Var& features, const Matrix* gram) {
  const SparseMatrix& a = adjacency.sparse();
  const Matrix& x = features.value();
  const Index n = a.rows();
  require(a.cols() == n && x.rows() == n, "dirichlet_energy: adjacency must be n x n for n feature rows");
  require(gram == nullptr || (gram->rows() == n && gram->cols() == n), "dirichlet_energy: Gram matrix must be n x n");
  double scale_ref = 0.0;
  for (Index k = 0; k < a.nonZeros(); ++k) scale_ref = std::max(scale_ref, std::abs(a.valuePtr()[k]));
  require(max_asymmetry(a) <= 1e-12 * (1.0 + scale_ref), "dirichlet_energy: adjacency is not symmetric");

  const double c = n > 0 ? 1.0 / (static_cast<double>(n) * static_cast<double>(n)) : 0.0;
  const Vector degree = row_sums(a);
  const Vector sq_norm = x.rowwise().squaredNorm();
  const auto* outer = a.outerIndexPtr();
  const auto* inner = a.innerIndexPtr();
  const double* av = a.valuePtr();
  // x_i . x_j for every stored (i, j).
  auto pair_dot = [&x, gram](Index i, Index j) {
    return gram != nullptr ? (*gram)(i, j) : x.row(i).dot(x.row(j));
  };
  double cross = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index k = outer[i]; k < outer[i + 1]; ++k) cross += av[k] * pair_dot(i, inner[k]);
  Matrix out(1, 1);
  out(0, 0) = c * (degree.dot(sq_norm) - cross);

  const SparseMatrix* ap = &a;
  const Matrix* xp = &x;
  return adjacency.tape()->record(
      "dirichlet_energy", std::move(out), {adjacency, features},
      [ap, xp, gram, c, sq_norm, degree](const Matrix&, const Matrix& g, GradSlots d) {
        const double s = g(0, 0) * c;
        if (d[0]) {
          const auto* outer = ap->outerIndexPtr();
          const auto* inner = ap->innerIndexPtr();
          double* da = d[0]->data();
          for (Index i = 0; i < ap->rows(); ++i)
            for (Index k = outer[i]; k < outer[i + 1]; ++k) {
              const Index j = inner[k];
              const double dot = gram != nullptr ? (*gram)(i, j) : xp->row(i).dot(xp->row(j));
              da[k] += s * (sq_norm(i) - dot);
            }
        }
        if (d[1]) {
          Matrix& dx = *d[1];
          dx += (2.0 * s) * (degree.asDiagonal() * (*xp));
          dx.noalias() -= s * ((*ap) * (*xp));
          dx.noalias() -= s * (ap->transpose() * (*xp));
        }
      });
}

Var sparse_connectivity_sparsity(const Var& adjacency, double beta, double gamma,
                                 RegDiagnostics* diagnostics) {
  const SparseMatrix& a = adjacency.sparse();
  const Index n = a.rows();
  require(a.cols() == n, "connectivity_sparsity: adjacency must be square");
  require(n > 0, "connectivity_sparsity: empty adjacency");
  const Eigen::Map<const Vector> values(a.valuePtr(), a.nonZeros());
  require(a.nonZeros() == 0 || values.minCoeff() >= 0.0,
          "connectivity_sparsity: adjacency has negative entries");

  const double nn = static_cast<double>(n);
  const Vector degree = row_sums(a);
  std::vector<std::uint8_t> above(static_cast<std::size_t>(n));
  Index floored = 0;
  double log_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    above[static_cast<std::size_t>(i)] = degree(i) > kDegreeFloor ? 1 : 0;
    if (!above[static_cast<std::size_t>(i)]) ++floored;
    log_sum += std::log(std::max(degree(i), kDegreeFloor));
  }
  if (diagnostics != nullptr) diagnostics->floored_degrees += floored;
  adjacency.tape()->note_branches(above);

  Matrix out(1, 1);
  out(0, 0) = -beta / nn * log_sum + gamma / (nn * nn) * values.squaredNorm();

  const SparseMatrix* ap = &a;
  return adjacency.tape()->record(
      "connectivity_sparsity", std::move(out), {adjacency},
      [ap, degree, above = std::move(above), beta, gamma, nn](const Matrix&, const Matrix& g,
                                                              GradSlots d) {
        if (!d[0]) return;
        const double s = g(0, 0);
        const auto* outer = ap->outerIndexPtr();
        const double* av = ap->valuePtr();
        double* da = d[0]->data();
        const double quad = 2.0 * s * gamma / (nn * nn);
        for (Index i = 0; i < ap->rows(); ++i) {
          const double row_term =
              above[static_cast<std::size_t>(i)] ? -s * beta / (nn * degree(i)) : 0.0;
          for (Index k = outer[i]; k < outer[i + 1]; ++k) da[k] += quad * av[k] + row_term;
        }
      });
}

}  // namespace

Var dirichlet_energy(const Var& adjacency, const Var& features, const Matrix* gram) {
  if (adjacency.is_sparse()) return sparse_dirichlet_energy(adjacency, features, gram);
  const Matrix& a = adjacency.value();
  const Matrix& x = features.value();
  const Index n = a.rows();
  require(a.cols() == n && x.rows() == n, "dirichlet_energy: adjacency must be n x n for n feature rows");
  double scale_ref = 0.0;
  if (a.size() > 0) scale_ref = a.cwiseAbs().maxCoeff();
  require(max_asymmetry(a) <= 1e-12 * (1.0 + scale_ref), "dirichlet_energy: adjacency is not symmetric");

  const double c = n > 0 ? 1.0 / (static_cast<double>(n) * static_cast<double>(n)) : 0.0;
  const Vector degree = a.rowwise().sum();
  const Vector sq_norm = x.rowwise().squaredNorm();
  Matrix ax(n, x.cols());
  ax.noalias() = a * x;
  Matrix out(1, 1);
  out(0, 0) = c * (degree.dot(sq_norm) - x.cwiseProduct(ax).sum());

  const Matrix* ap = &a;
  const Matrix* xp = &x;
  return adjacency.tape()->record(
      "dirichlet_energy", std::move(out), {adjacency, features},
      [ap, xp, c, sq_norm, degree](const Matrix&, const Matrix& g, GradSlots d) {
        const double s = g(0, 0) * c;
        if (d[0]) {
          Matrix& da = *d[0];
          da.noalias() -= s * (*xp) * xp->transpose();
          da.colwise() += s * sq_norm;
        }
        if (d[1]) {
          Matrix& dx = *d[1];
          dx += (2.0 * s) * (degree.asDiagonal() * (*xp));
          dx.noalias() -= s * (*ap) * (*xp);
          dx.noalias() -= s * ap->transpose() * (*xp);
        }
      });
}

Var connectivity_sparsity(const Var& adjacency, double beta, double gamma,
                          RegDiagnostics* diagnostics) {
  require(beta >= 0.0 && gamma >= 0.0, "connectivity_sparsity: beta and gamma must be nonnegative");
  if (adjacency.is_sparse()) return sparse_connectivity_sparsity(adjacency, beta, gamma, diagnostics);
  const Matrix& a = adjacency.value();
  const Index n = a.rows();
  require(a.cols() == n, "connectivity_sparsity: adjacency must be square");
  require(n > 0, "connectivity_sparsity: empty adjacency");
  require(a.minCoeff() >= 0.0, "connectivity_sparsity: adjacency has negative entries");

  const double nn = static_cast<double>(n);
  const Vector degree = a.rowwise().sum();
  std::vector<std::uint8_t> above(static_cast<std::size_t>(n));
  Index floored = 0;
  double log_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    above[static_cast<std::size_t>(i)] = degree(i) > kDegreeFloor ? 1 : 0;
    if (!above[static_cast<std::size_t>(i)]) ++floored;
    log_sum += std::log(std::max(degree(i), kDegreeFloor));
  }
  if (diagnostics != nullptr) diagnostics->floored_degrees += floored;
  adjacency.tape()->note_branches(above);

  Matrix out(1, 1);
  out(0, 0) = -beta / nn * log_sum + gamma / (nn * nn) * a.squaredNorm();

  const Matrix* ap = &a;
  return adjacency.tape()->record(
      "connectivity_sparsity", std::move(out), {adjacency},
      [ap, degree, above = std::move(above), beta, gamma, nn](const Matrix&, const Matrix& g,
                                                              GradSlots d) {
        if (!d[0]) return;
        const double s = g(0, 0);
        Vector row_term(degree.size());
        for (Index i = 0; i < degree.size(); ++i)
          row_term(i) = above[static_cast<std::size_t>(i)] ? -s * beta / (nn * degree(i)) : 0.0;
        *d[0] += (2.0 * s * gamma / (nn * nn)) * (*ap);
        d[0]->colwise() += row_term;
      });
}

Var graph_reg_loss(const Var& adjacency, const Var& features, const GraphRegWeights& weights,
                   RegDiagnostics* diagnostics, const Matrix* gram) {
  weights.validate();
  Tape& tape = *adjacency.tape();
  if (weights.is_zero()) return tape.constant(Matrix::Zero(1, 1));
  Var total;
  if (weights.alpha != 0.0) total = ops::scale(dirichlet_energy(adjacency, features, gram), weights.alpha);
  if (weights.beta != 0.0 || weights.gamma != 0.0) {
    const Var f = connectivity_sparsity(adjacency, weights.beta, weights.gamma, diagnostics);
    total = total.valid() ? ops::add(total, f) : f;
  }
  return total;
}

}  // namespace itergraph
