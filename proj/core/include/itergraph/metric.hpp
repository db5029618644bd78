#pragma once

#include "itergraph/numkit/tape.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace itergraph {

// Cosine denominators are floored here; a zero node vector is similar to nothing.
inline constexpr double kCosineNormFloor = 1e-8;

// Learnable weighted-cosine metric: row k of `weights` reweights every input
// dimension for head k.
struct MetricParams {
  Tensor weights;  // heads x dim
  double epsilon = 0.0;

  Index heads() const { return weights.rows(); }
  Index dim() const { return weights.cols(); }
};

// Entries i.i.d. uniform on (0, 1).
MetricParams make_metric_params(std::string name, Index heads, Index dim, double epsilon,
                                std::mt19937_64& rng);

// S_ij = (1/m) sum_k cos(w_k * v_i, w_k * v_j) for nodes v (n x d) and
// weights (m x d). S is exactly symmetric; rows of zero vectors give 0.
Var multi_head_cosine(const Var& nodes, const Var& weights);

// Keeps S_ij where S_ij > epsilon, zero elsewhere. Gradient flows through kept entries.
Var epsilon_sparsify(const Var& similarity, double epsilon);

// epsilon_sparsify(multi_head_cosine(nodes, weights), epsilon) as one sparse
// node, without materializing the dense similarity matrix.
Var sparse_cosine_graph(const Var& nodes, const Var& weights, double epsilon);

// Plain cosine similarity of the rows of x (zero rows similar to nothing).
Matrix cosine_similarity(const Matrix& x);

// Binary symmetric kNN graph under cosine similarity: each node links to its k
// most similar other nodes (ties to the lower index), then the directed sets
// are symmetrized by union. k >= n is clamped to n - 1 with a warning.
Matrix knn_graph(const Matrix& features, Index k);

}  // namespace itergraph
