#pragma once

#include "itergraph/numkit/tape.hpp"

#include <random>
#include <span>
#include <string>

namespace itergraph {

// D^{-1/2} (A0 + I) D^{-1/2}, D the degree matrix of A0 + I.
Matrix normalize_initial(const Matrix& initial_adjacency);

enum class MixProvenance { with_initial, across_iterations };

struct MixedAdjacency {
  Var matrix;
  MixProvenance provenance = MixProvenance::with_initial;
};

// lambda * L0 + (1 - lambda) * rownorm(A). Rows of A summing to zero stay zero.
// lambda == 1 returns L0 itself.
MixedAdjacency mix_with_initial(const Var& learned, const Var& normalized_initial, double lambda);

// eta * current + (1 - eta) * initial.
MixedAdjacency mix_iterations(const MixedAdjacency& current, const MixedAdjacency& initial,
                              double eta);

// Two-layer GCN weights, no biases.
struct GcnParams {
  Tensor w1;  // d_in x hidden
  Tensor w2;  // hidden x classes
};

// Glorot-uniform initialization.
GcnParams make_gcn_params(Index input_dim, Index hidden, Index classes, std::mt19937_64& rng);

struct GcnOutput {
  Var embedding;  // Z = dropout(ReLU(A X W1)), n x hidden
  Var logits;     // A Z W2, n x classes; softmax gives the class probabilities
};

// `dropout` is applied to the first-layer output only while training.
GcnOutput gcn_forward(const Var& adjacency, const Var& features, const Var& w1, const Var& w2,
                      double dropout, bool training);

// Mean cross-entropy of softmax(logits) against labels over `mask` rows.
Var prediction_loss(const Var& logits, std::span<const int> labels, std::span<const Index> mask);

}  // namespace itergraph
