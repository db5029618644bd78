#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace itergraph {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
// Compressed row storage; graphs past the similarity threshold are mostly empty.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// A named leaf value that can receive gradients from a Tape.
struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value once any backward pass touched it
  bool requires_grad = true;

  Tensor() = default;
  Tensor(std::string name, Matrix value, bool requires_grad = true);

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  // Resets grad to zeros of the value's shape.
  void zero_grad();
};

// Largest |a_ij - b_ij|; both shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

// Cache-blocked transpose helpers for large square matrices.
void mirror_upper(Matrix& s);                     // s(i, j) = s(j, i) for i > j
Matrix plus_transpose(const Matrix& g);           // g + g^T
double max_asymmetry(const Matrix& a);            // max |a_ij - a_ji|
double max_asymmetry(const SparseMatrix& a);

// Merged pattern of two same-shape compressed matrices with zero values.
// from_a[k] is the position in `pattern` of a's k-th stored entry.
struct SparseUnion {
  SparseMatrix pattern;
  std::vector<Index> from_a;
  std::vector<Index> from_b;
};
SparseUnion sparse_union(const SparseMatrix& a, const SparseMatrix& b);

// |a - b|_F^2; the sparse form does not build the difference.
double squared_distance(const Matrix& a, const Matrix& b);
double squared_distance(const SparseMatrix& a, const SparseMatrix& b);

// For a structurally symmetric compressed matrix: position of (j, i) for
// every stored (i, j).
std::vector<Index> transpose_positions(const SparseMatrix& s);

}  // namespace itergraph
