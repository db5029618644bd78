#include "itergraph/metric.hpp"

#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/ops.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace itergraph {
MetricParams make_metric_params(std::string name, Index heads, Index dim, double epsilon,
                                std::mt19937_64& rng) {
  require(heads >= 1, "metric: at least one head is required");
  require(dim >= 1, "metric: dimension must be positive");
  require(epsilon >= 0.0, "metric: epsilon must be nonnegative");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix w(heads, dim);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = unit(rng);
  return MetricParams{Tensor(std::move(name), std::move(w)), epsilon};
}

namespace {

// Unit-normalized reweighted vectors of every head side by side: n x (m*d).
struct HeadVectors {
  Matrix normalized;
  Matrix norms;  // n x m, floored
};

HeadVectors normalize_heads(const Matrix& v, const Matrix& w) {
  require(v.cols() == w.cols(), "multi_head_cosine: node dimension " + std::to_string(v.cols()) +
                                    " does not match metric dimension " + std::to_string(w.cols()));
  require(w.rows() >= 1, "multi_head_cosine: no heads");
  const Index n = v.rows();
  const Index d = v.cols();
  const Index m = w.rows();
  HeadVectors h{Matrix(n, m * d), Matrix(n, m)};
  for (Index k = 0; k < m; ++k) {
    auto block = h.normalized.middleCols(k * d, d);
    block.noalias() = v * w.row(k).asDiagonal();
    for (Index i = 0; i < n; ++i) {
      const double r = std::max(block.row(i).norm(), kCosineNormFloor);
      h.norms(i, k) = r;
      block.row(i) /= r;
    }
  }
  return h;
}

// Given d(loss)/d(normalized), accumulate into the node and weight gradients.
void normalize_heads_backward(const HeadVectors& h, const Matrix& d_norm, const Matrix& v,
                              const Matrix& w, GradSlots slots) {
  const Index rows = h.normalized.rows();
  const Index d = w.cols();
  for (Index k = 0; k < w.rows(); ++k) {
    auto nk = h.normalized.middleCols(k * d, d);
    auto dn = d_norm.middleCols(k * d, d);
    // d(u / max(|u|, floor)) applied row by row.
    Matrix du(rows, d);
    for (Index i = 0; i < rows; ++i) {
      const double r = h.norms(i, k);
      if (r > kCosineNormFloor) {
        du.row(i) = (dn.row(i) - nk.row(i).dot(dn.row(i)) * nk.row(i)) / r;
      } else {
        du.row(i) = dn.row(i) / kCosineNormFloor;
      }
    }
    if (slots[0]) *slots[0] += du * w.row(k).asDiagonal();
    if (slots[1]) slots[1]->row(k) += du.cwiseProduct(v).colwise().sum();
  }
}

}  // namespace

Var multi_head_cosine(const Var& nodes, const Var& weights) {
  const Matrix& v = nodes.value();
  const Matrix& w = weights.value();
  HeadVectors h = normalize_heads(v, w);
  const Index n = v.rows();
  const double inv_m = 1.0 / static_cast<double>(w.rows());
  Matrix s = Matrix::Zero(n, n);
  s.selfadjointView<Eigen::Upper>().rankUpdate(h.normalized, inv_m);
  mirror_upper(s);

  const Matrix* vp = &v;
  const Matrix* wp = &w;
  return nodes.tape()->record(
      "multi_head_cosine", std::move(s), {nodes, weights},
      [vp, wp, h = std::move(h), inv_m](const Matrix&, const Matrix& g, GradSlots slots) {
        Matrix sym = plus_transpose(g);
        sym *= inv_m;
        Matrix d_norm(h.normalized.rows(), h.normalized.cols());
        d_norm.noalias() = sym * h.normalized;
        sym.resize(0, 0);
        normalize_heads_backward(h, d_norm, *vp, *wp, slots);
      });
}

Var sparse_cosine_graph(const Var& nodes, const Var& weights, double epsilon) {
  require(epsilon >= 0.0, "sparse_cosine_graph: epsilon must be nonnegative");
  const Matrix& v = nodes.value();
  const Matrix& w = weights.value();
  HeadVectors h = normalize_heads(v, w);
  const Index n = v.rows();
  const double inv_m = 1.0 / static_cast<double>(w.rows());

  // Upper triangle (with diagonal) panel by panel; the lower half is mirrored
  // so the pattern and values are exactly symmetric.
  constexpr Index kPanel = 128;
  std::vector<int> up_row, up_col;
  std::vector<double> up_val;
  std::vector<int> row_count(static_cast<std::size_t>(n), 0);
  Matrix panel;
  std::vector<int> kept(static_cast<std::size_t>(n));
  for (Index i0 = 0; i0 < n; i0 += kPanel) {
    const Index r = std::min(kPanel, n - i0);
    panel.resize(r, n - i0);
    panel.noalias() = h.normalized.middleRows(i0, r) * h.normalized.bottomRows(n - i0).transpose();
    panel *= inv_m;
    for (Index a = 0; a < r; ++a) {
      const int i = static_cast<int>(i0 + a);
      const double* p = panel.row(a).data();
      // Branch-free compaction of the kept columns.
      std::size_t count = 0;
      for (Index c = a; c < n - i0; ++c) {
        kept[count] = static_cast<int>(c);
        count += p[c] > epsilon ? 1 : 0;
      }
      for (std::size_t e = 0; e < count; ++e) {
        const int j = static_cast<int>(i0) + kept[e];
        up_row.push_back(i);
        up_col.push_back(j);
        up_val.push_back(p[kept[e]]);
        ++row_count[static_cast<std::size_t>(j)];
      }
      row_count[static_cast<std::size_t>(i)] += static_cast<int>(count);
      // the diagonal, when kept, was counted for row i twice
      if (count > 0 && kept[0] == a) --row_count[static_cast<std::size_t>(i)];
    }
  }
  SparseMatrix out(n, n);
  Index nnz = 0;
  for (int c : row_count) nnz += c;
  out.resizeNonZeros(nnz);
  auto* outer = out.outerIndexPtr();
  auto* inner = out.innerIndexPtr();
  double* values = out.valuePtr();
  outer[0] = 0;
  for (Index i = 0; i < n; ++i) outer[i + 1] = outer[i] + row_count[static_cast<std::size_t>(i)];
  // Upper entries arrive row by row in increasing column order. Row j receives
  // its lower entries (j, i < j) before its own upper ones, also in order.
  std::vector<Index> fill(outer, outer + n);
  std::vector<Index> mirror(static_cast<std::size_t>(nnz));
  for (std::size_t e = 0; e < up_val.size(); ++e) {
    const int i = up_row[e];
    const int j = up_col[e];
    const Index p = fill[static_cast<std::size_t>(i)]++;
    inner[p] = j;
    values[p] = up_val[e];
    if (j == i) {
      mirror[static_cast<std::size_t>(p)] = p;
      continue;
    }
    const Index q = fill[static_cast<std::size_t>(j)]++;
    inner[q] = i;
    values[q] = up_val[e];
    mirror[static_cast<std::size_t>(p)] = q;
    mirror[static_cast<std::size_t>(q)] = p;
  }

  const Matrix* vp = &v;
  const Matrix* wp = &w;
  return nodes.tape()->record_sparse(
      "sparse_cosine_graph", std::move(out), {nodes, weights},
      [vp, wp, h = std::move(h), mirror = std::move(mirror), inv_m](
          const SparseMatrix& a, const Matrix& g, GradSlots slots) {
        SparseMatrix sym = a;
        double* sv = sym.valuePtr();
        for (std::size_t k = 0; k < mirror.size(); ++k)
          sv[k] = (g(static_cast<Index>(k), 0) + g(mirror[k], 0)) * inv_m;
        Matrix d_norm(h.normalized.rows(), h.normalized.cols());
        d_norm.noalias() = sym * h.normalized;
        normalize_heads_backward(h, d_norm, *vp, *wp, slots);
      });
}

Var epsilon_sparsify(const Var& similarity, double epsilon) {
  require(epsilon >= 0.0, "epsilon_sparsify: epsilon must be nonnegative");
  return ops::threshold_mask(similarity, epsilon);
}

Matrix cosine_similarity(const Matrix& x) {
  Matrix unit = x;
  for (Index i = 0; i < unit.rows(); ++i) {
    const double r = unit.row(i).norm();
    if (r > kCosineNormFloor) {
      unit.row(i) /= r;
    } else {
      unit.row(i).setZero();
    }
  }
  Matrix s = Matrix::Zero(x.rows(), x.rows());
  s.selfadjointView<Eigen::Upper>().rankUpdate(unit, 1.0);
  mirror_upper(s);
  return s;
}

Matrix knn_graph(const Matrix& features, Index k) {
  require(k >= 1, "knn_graph: k must be at least 1");
  const Index n = features.rows();
  Matrix a = Matrix::Zero(n, n);
  if (n <= 1) return a;
  if (k >= n) {
    spdlog::warn("knn_graph: k = {} >= n = {}; clamping to {}", k, n, n - 1);
    k = n - 1;
  }
  const Matrix sim = cosine_similarity(features);
  std::vector<Index> order(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t pos = 0;
    for (Index j = 0; j < n; ++j)
      if (j != i) order[pos++] = j;
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index p, Index q) {
      if (sim(i, p) != sim(i, q)) return sim(i, p) > sim(i, q);
      return p < q;
    });
    for (Index r = 0; r < k; ++r) {
      a(i, order[static_cast<std::size_t>(r)]) = 1.0;
      a(order[static_cast<std::size_t>(r)], i) = 1.0;
    }
  }
  return a;
}

}  // namespace itergraph
