#pragma once

#include "itergraph/numkit/tape.hpp"

#include <span>

namespace itergraph::ops {

// Differentiable primitives. All inputs must live on the same tape; the result
// is recorded on that tape. Threshold-style ops use the subgradient that is
// zero at the kink and report their branch masks to Tape::note_branches.

// Dispatches to spmm when `a` is sparse.
Var matmul(const Var& a, const Var& b);
// Sparse a times dense b. Gradients reach the stored entries of `a` only.
Var spmm(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// alpha * a + beta * b. Two sparse inputs give a sparse result on the union
// of their patterns.
Var combine(const Var& a, double alpha, const Var& b, double beta);
Var sparse_combine(const Var& a, double alpha, const Var& b, double beta);

// Broadcasts: col is n x 1 (one factor per row), row is 1 x d (one per column).
Var scale_rows(const Var& a, const Var& col);
Var divide_rows(const Var& a, const Var& col);
Var scale_cols(const Var& a, const Var& row);

Var sum(const Var& a);
Var row_sum(const Var& a);

Var relu(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
// max(a, floor) elementwise.
Var maximum(const Var& a, double floor);
// a_ij where a_ij > threshold, else 0.
Var threshold_mask(const Var& a, double threshold);

// tr(X^T M X) for X n x d, M n x n.
Var trace_quadratic(const Var& x, const Var& m);

// Mean over `rows` of -log softmax(logits_i)[labels_i]. `rows` must be nonempty.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels,
                          std::span<const Index> rows);

// Inverted dropout with a mask drawn from the tape's rng. Identity when
// !training or rate == 0.
Var dropout(const Var& a, double rate, bool training);

// Row-wise softmax of a plain matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace itergraph::ops
