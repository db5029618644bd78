#include "itergraph/numkit/tensor.hpp"

#include "itergraph/numkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace itergraph {

Tensor::Tensor(std::string name, Matrix value, bool requires_grad)
    : name(std::move(name)), value(std::move(value)), requires_grad(requires_grad) {
  zero_grad();
}

void Tensor::zero_grad() { grad.setZero(value.rows(), value.cols()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double squared_distance(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "squared_distance: shape mismatch");
  return (a - b).squaredNorm();
}

namespace {
constexpr Index kTile = 64;

// Visits tile pairs (bi, bj) with bi >= bj of a square matrix.
template <typename Fn>
void for_each_tile_pair(Index n, Fn&& fn) {
  for (Index bi = 0; bi < n; bi += kTile)
    for (Index bj = 0; bj <= bi; bj += kTile)
      fn(bi, std::min(bi + kTile, n), bj, std::min(bj + kTile, n));
}
}  // namespace

void mirror_upper(Matrix& s) {
  require(s.rows() == s.cols(), "mirror_upper: matrix must be square");
  for_each_tile_pair(s.rows(), [&](Index i0, Index i1, Index j0, Index j1) {
    for (Index i = i0; i < i1; ++i)
      for (Index j = j0; j < std::min(j1, i); ++j) s(i, j) = s(j, i);
  });
}

Matrix plus_transpose(const Matrix& g) {
  require(g.rows() == g.cols(), "plus_transpose: matrix must be square");
  Matrix out(g.rows(), g.cols());
  for_each_tile_pair(g.rows(), [&](Index i0, Index i1, Index j0, Index j1) {
    for (Index i = i0; i < i1; ++i)
      for (Index j = j0; j < std::min(j1, i + 1); ++j) {
        const double v = g(i, j) + g(j, i);
        out(i, j) = v;
        out(j, i) = v;
      }
  });
  return out;
}

double max_asymmetry(const Matrix& a) {
  require(a.rows() == a.cols(), "max_asymmetry: matrix must be square");
  double worst = 0.0;
  for_each_tile_pair(a.rows(), [&](Index i0, Index i1, Index j0, Index j1) {
    for (Index i = i0; i < i1; ++i)
      for (Index j = j0; j < std::min(j1, i); ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
  });
  return worst;
}

}  // namespace itergraph
