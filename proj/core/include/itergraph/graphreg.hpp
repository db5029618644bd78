#pragma once

#include "itergraph/numkit/tape.hpp"

namespace itergraph {

// Degrees are floored here before the log barrier.
inline constexpr double kDegreeFloor = 1e-12;

// Weights of the smoothness (alpha), connectivity (beta) and sparsity (gamma) terms.
struct GraphRegWeights {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  bool is_zero() const { return alpha == 0.0 && beta == 0.0 && gamma == 0.0; }
  void validate() const;
};

struct RegDiagnostics {
  Index floored_degrees = 0;
};

// (1/n^2) tr(X^T (D - A) X) with D = diag(A 1); equals
// (1/2n^2) sum_ij A_ij |x_i - x_j|^2 for symmetric A. Throws ContractError on
// an asymmetric adjacency. A sparse adjacency may pass the feature Gram matrix
// X X^T, which turns the per-entry work into lookups.
Var dirichlet_energy(const Var& adjacency, const Var& features, const Matrix* gram = nullptr);

// -(beta/n) 1^T log(max(A 1, floor)) + (gamma/n^2) |A|_F^2.
Var connectivity_sparsity(const Var& adjacency, double beta, double gamma,
                          RegDiagnostics* diagnostics = nullptr);

// alpha * dirichlet_energy + connectivity_sparsity. A constant 0 when every
// weight is zero.
Var graph_reg_loss(const Var& adjacency, const Var& features, const GraphRegWeights& weights,
                   RegDiagnostics* diagnostics = nullptr, const Matrix* gram = nullptr);

}  // namespace itergraph
