#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/ops.hpp"
#include "itergraph/numkit/tensor.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

namespace itergraph {

double max_asymmetry(const SparseMatrix& a) {
  require(a.rows() == a.cols(), "max_asymmetry: matrix must be square");
  SparseMatrix t = a.transpose();
  t.makeCompressed();
  const auto* ao = a.outerIndexPtr();
  const auto* ai = a.innerIndexPtr();
  const double* av = a.valuePtr();
  const auto* to = t.outerIndexPtr();
  const auto* ti = t.innerIndexPtr();
  const double* tv = t.valuePtr();
  double worst = 0.0;
  for (Index r = 0; r < a.rows(); ++r) {
    int p = ao[r], q = to[r];
    while (p < ao[r + 1] || q < to[r + 1]) {
      const int ca = p < ao[r + 1] ? ai[p] : std::numeric_limits<int>::max();
      const int ct = q < to[r + 1] ? ti[q] : std::numeric_limits<int>::max();
      double diff;
      if (ca == ct) {
        diff = av[p++] - tv[q++];
      } else if (ca < ct) {
        diff = av[p++];
      } else {
        diff = tv[q++];
      }
      worst = std::max(worst, std::abs(diff));
    }
  }
  return worst;
}

SparseUnion sparse_union(const SparseMatrix& a, const SparseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sparse_union: shape mismatch");
  require(a.isCompressed() && b.isCompressed(), "sparse_union: inputs must be compressed");
  SparseUnion u;
  u.from_a.resize(static_cast<std::size_t>(a.nonZeros()));
  u.from_b.resize(static_cast<std::size_t>(b.nonZeros()));
  const auto* ao = a.outerIndexPtr();
  const auto* ai = a.innerIndexPtr();
  const auto* bo = b.outerIndexPtr();
  const auto* bi = b.innerIndexPtr();

  std::vector<int> outer(static_cast<std::size_t>(a.rows()) + 1, 0);
  std::vector<int> inner;
  inner.reserve(static_cast<std::size_t>(a.nonZeros() + b.nonZeros()));
  for (Index r = 0; r < a.rows(); ++r) {
    int p = ao[r], q = bo[r];
    while (p < ao[r + 1] || q < bo[r + 1]) {
      const int ca = p < ao[r + 1] ? ai[p] : std::numeric_limits<int>::max();
      const int cb = q < bo[r + 1] ? bi[q] : std::numeric_limits<int>::max();
      const int c = std::min(ca, cb);
      const Index pos = static_cast<Index>(inner.size());
      inner.push_back(c);
      if (ca == c) u.from_a[static_cast<std::size_t>(p++)] = pos;
      if (cb == c) u.from_b[static_cast<std::size_t>(q++)] = pos;
    }
    outer[static_cast<std::size_t>(r) + 1] = static_cast<int>(inner.size());
  }
  u.pattern.resize(a.rows(), a.cols());
  u.pattern.resizeNonZeros(static_cast<Index>(inner.size()));
  std::copy(outer.begin(), outer.end(), u.pattern.outerIndexPtr());
  std::copy(inner.begin(), inner.end(), u.pattern.innerIndexPtr());
  std::fill_n(u.pattern.valuePtr(), inner.size(), 0.0);
  return u;
}

double squared_distance(const SparseMatrix& a, const SparseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "squared_distance: shape mismatch");
  require(a.isCompressed() && b.isCompressed(), "squared_distance: inputs must be compressed");
  const auto* ao = a.outerIndexPtr();
  const auto* ai = a.innerIndexPtr();
  const double* av = a.valuePtr();
  const auto* bo = b.outerIndexPtr();
  const auto* bi = b.innerIndexPtr();
  const double* bv = b.valuePtr();
  double total = 0.0;
  for (Index r = 0; r < a.rows(); ++r) {
    int p = ao[r], q = bo[r];
    while (p < ao[r + 1] && q < bo[r + 1]) {
      double diff;
      if (ai[p] == bi[q]) {
        diff = av[p++] - bv[q++];
      } else if (ai[p] < bi[q]) {
        diff = av[p++];
      } else {
        diff = bv[q++];
      }
      total += diff * diff;
    }
    for (; p < ao[r + 1]; ++p) total += av[p] * av[p];
    for (; q < bo[r + 1]; ++q) total += bv[q] * bv[q];
  }
  return total;
}

std::vector<Index> transpose_positions(const SparseMatrix& s) {
  require(s.rows() == s.cols() && s.isCompressed(), "transpose_positions: compressed square matrix required");
  const auto* outer = s.outerIndexPtr();
  const auto* inner = s.innerIndexPtr();
  std::vector<Index> cursor(outer, outer + s.rows());
  std::vector<Index> pos(static_cast<std::size_t>(s.nonZeros()));
  // Rows are visited in increasing order, so row j meets its entries (j, i)
  // in the same increasing-i order its columns are stored in.
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index k = outer[i]; k < outer[i + 1]; ++k) {
      const Index j = inner[k];
      const Index at = cursor[static_cast<std::size_t>(j)]++;
      require(at < outer[j + 1] && inner[at] == i, "transpose_positions: pattern is not symmetric");
      pos[static_cast<std::size_t>(k)] = at;
    }
  }
  return pos;
}

namespace ops {

Var spmm(const Var& a, const Var& b) {
  require(a.is_sparse() && !b.is_sparse(), "spmm: expects sparse x dense");
  require(a.cols() == b.rows(), "spmm: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
  const SparseMatrix* av = &a.sparse();
  const Matrix* bv = &b.value();
  Matrix out(av->rows(), bv->cols());
  out.noalias() = (*av) * (*bv);
  return a.tape()->record("spmm", std::move(out), {a, b},
                          [av, bv](const Matrix&, const Matrix& g, GradSlots d) {
                            if (d[0]) {
                              const auto* outer = av->outerIndexPtr();
                              const auto* inner = av->innerIndexPtr();
                              double* da = d[0]->data();
                              for (Index i = 0; i < av->rows(); ++i)
                                for (Index k = outer[i]; k < outer[i + 1]; ++k)
                                  da[k] += g.row(i).dot(bv->row(inner[k]));
                            }
                            if (d[1]) d[1]->noalias() += av->transpose() * g;
                          });
}

Var sparse_combine(const Var& a, double alpha, const Var& b, double beta) {
  require(a.is_sparse() && b.is_sparse(), "sparse_combine: both inputs must be sparse");
  const SparseMatrix& av = a.sparse();
  const SparseMatrix& bv = b.sparse();
  SparseUnion u = sparse_union(av, bv);
  double* out = u.pattern.valuePtr();
  for (Index k = 0; k < av.nonZeros(); ++k) out[u.from_a[static_cast<std::size_t>(k)]] = alpha * av.valuePtr()[k];
  for (Index k = 0; k < bv.nonZeros(); ++k) out[u.from_b[static_cast<std::size_t>(k)]] += beta * bv.valuePtr()[k];
  return a.tape()->record_sparse(
      "sparse_combine", std::move(u.pattern), {a, b},
      [from_a = std::move(u.from_a), from_b = std::move(u.from_b), alpha, beta](
          const SparseMatrix&, const Matrix& g, GradSlots d) {
        if (d[0])
          for (std::size_t k = 0; k < from_a.size(); ++k) (*d[0])(static_cast<Index>(k), 0) += alpha * g(from_a[k], 0);
        if (d[1])
          for (std::size_t k = 0; k < from_b.size(); ++k) (*d[1])(static_cast<Index>(k), 0) += beta * g(from_b[k], 0);
      });
}

}  // namespace ops
}  // namespace itergraph
