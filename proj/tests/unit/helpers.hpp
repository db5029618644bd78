#pragma once

#include "itergraph/data.hpp"
#include "itergraph/numkit/tensor.hpp"

#include <random>

namespace testing {

using itergraph::Index;
using itergraph::Matrix;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Symmetric, nonnegative, zero diagonal; each pair kept with probability `density`.
inline Matrix random_symmetric(Index n, std::mt19937_64& rng, double density = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u(rng) < density) a(i, j) = a(j, i) = u(rng);
  return a;
}

inline Matrix random_binary_graph(Index n, std::mt19937_64& rng, double density) {
  Matrix a = random_symmetric(n, rng, density);
  return (a.array() > 0.0).cast<double>().matrix();
}

// Two well separated Gaussian blobs per class in `dim` dimensions.
inline itergraph::Dataset blobs(Index n, Index dim, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.6);
  Matrix centers = random_matrix(classes, dim, rng, -2.0, 2.0);
  itergraph::Dataset ds;
  ds.name = "blobs";
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.num_classes = classes;
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (Index j = 0; j < dim; ++j) ds.features(i, j) = centers(c, j) + noise(rng);
  }
  return ds;
}

}  // namespace testing
