#include "itergraph/numkit/ops.hpp"

#include "itergraph/numkit/errors.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace itergraph::ops {
namespace {

Tape& tape_of(const Var& a) {
  require(a.valid(), "op on an empty Var");
  return *a.tape();
}

void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

void check_col(const Var& a, const Var& col, const char* op) {
  require(col.cols() == 1 && col.rows() == a.rows(), std::string(op) + ": expects an n x 1 factor");
}

std::vector<std::uint8_t> branch_mask(const Matrix& a, double threshold) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(a.size()));
  const double* p = a.data();
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = p[i] > threshold ? 1 : 0;
  return mask;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
  if (a.is_sparse()) return spmm(a, b);
  const Matrix* av = &a.value();
  const Matrix* bv = &b.value();
  Matrix out(av->rows(), bv->cols());
  out.noalias() = (*av) * (*bv);
  return tape_of(a).record("matmul", std::move(out), {a, b},
                           [av, bv](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) d[0]->noalias() += g * bv->transpose();
                             if (d[1]) d[1]->noalias() += av->transpose() * g;
                           });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return tape_of(a).record("transpose", std::move(out), {a},
                           [](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g.transpose();
                           });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return tape_of(a).record("add", std::move(out), {a, b},
                           [](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g;
                             if (d[1]) *d[1] += g;
                           });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return tape_of(a).record("sub", std::move(out), {a, b},
                           [](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g;
                             if (d[1]) *d[1] -= g;
                           });
}

Var hadamard(const Var& a, const Var& b) {
  same_shape(a, b, "hadamard");
  const Matrix* av = &a.value();
  const Matrix* bv = &b.value();
  Matrix out = av->cwiseProduct(*bv);
  return tape_of(a).record("hadamard", std::move(out), {a, b},
                           [av, bv](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g.cwiseProduct(*bv);
                             if (d[1]) *d[1] += g.cwiseProduct(*av);
                           });
}

Var divide(const Var& a, const Var& b) {
  same_shape(a, b, "divide");
  const Matrix* bv = &b.value();
  Matrix out = a.value().cwiseQuotient(*bv);
  return tape_of(a).record("divide", std::move(out), {a, b},
                           [bv](const Matrix& y, const Matrix& g, GradSlots d) {
                             const Matrix gb = g.cwiseQuotient(*bv);
                             if (d[0]) *d[0] += gb;
                             if (d[1]) *d[1] -= gb.cwiseProduct(y);
                           });
}

Var scale(const Var& a, double s) {
  Matrix out = s * a.value();
  return tape_of(a).record("scale", std::move(out), {a},
                           [s](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += s * g;
                           });
}

Var combine(const Var& a, double alpha, const Var& b, double beta) {
  same_shape(a, b, "combine");
  if (a.is_sparse() || b.is_sparse()) {
    require(a.is_sparse() && b.is_sparse(), "combine: cannot mix sparse and dense inputs");
    return sparse_combine(a, alpha, b, beta);
  }
  Matrix out = alpha * a.value() + beta * b.value();
  return tape_of(a).record("combine", std::move(out), {a, b},
                           [alpha, beta](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += alpha * g;
                             if (d[1]) *d[1] += beta * g;
                           });
}

Var scale_rows(const Var& a, const Var& col) {
  check_col(a, col, "scale_rows");
  const Matrix* av = &a.value();
  const Matrix* cv = &col.value();
  Matrix out = cv->col(0).asDiagonal() * (*av);
  return tape_of(a).record("scale_rows", std::move(out), {a, col},
                           [av, cv](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += cv->col(0).asDiagonal() * g;
                             if (d[1]) *d[1] += g.cwiseProduct(*av).rowwise().sum();
                           });
}

Var divide_rows(const Var& a, const Var& col) {
  check_col(a, col, "divide_rows");
  const Matrix* cv = &col.value();
  Matrix out = cv->col(0).cwiseInverse().asDiagonal() * a.value();
  return tape_of(a).record(
      "divide_rows", std::move(out), {a, col}, [cv](const Matrix& y, const Matrix& g, GradSlots d) {
        const Vector inv = cv->col(0).cwiseInverse();
        if (d[0]) *d[0] += inv.asDiagonal() * g;
        if (d[1]) *d[1] -= (g.cwiseProduct(y).rowwise().sum()).cwiseProduct(inv);
      });
}

Var scale_cols(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "scale_cols: expects a 1 x d factor");
  const Matrix* av = &a.value();
  const Matrix* rv = &row.value();
  Matrix out = (*av) * rv->row(0).asDiagonal();
  return tape_of(a).record("scale_cols", std::move(out), {a, row},
                           [av, rv](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g * rv->row(0).asDiagonal();
                             if (d[1]) *d[1] += g.cwiseProduct(*av).colwise().sum();
                           });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record("sum", std::move(out), {a},
                           [](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) d[0]->array() += g(0, 0);
                           });
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).record("row_sum", std::move(out), {a},
                           [](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) d[0]->colwise() += g.col(0);
                           });
}

Var relu(const Var& a) {
  Tape& tape = tape_of(a);
  if (tape.tracking_branches()) tape.note_branches(branch_mask(a.value(), 0.0));
  Matrix out = a.value().cwiseMax(0.0);
  return tape.record("relu", std::move(out), {a},
                     [](const Matrix& y, const Matrix& g, GradSlots d) {
                       if (d[0]) *d[0] += (y.array() > 0.0).select(g, 0.0);
                     });
}

Var log(const Var& a) {
  const Matrix* av = &a.value();
  Matrix out = av->array().log().matrix();
  return tape_of(a).record("log", std::move(out), {a},
                           [av](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += g.cwiseQuotient(*av);
                           });
}

Var sqrt(const Var& a) {
  Matrix out = a.value().cwiseSqrt();
  return tape_of(a).record("sqrt", std::move(out), {a},
                           [](const Matrix& y, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += (0.5 * g.array() / y.array()).matrix();
                           });
}

Var square(const Var& a) {
  const Matrix* av = &a.value();
  Matrix out = av->cwiseAbs2();
  return tape_of(a).record("square", std::move(out), {a},
                           [av](const Matrix&, const Matrix& g, GradSlots d) {
                             if (d[0]) *d[0] += 2.0 * g.cwiseProduct(*av);
                           });
}

Var maximum(const Var& a, double floor) {
  Tape& tape = tape_of(a);
  if (tape.tracking_branches()) tape.note_branches(branch_mask(a.value(), floor));
  const Matrix* av = &a.value();
  Matrix out = av->cwiseMax(floor);
  return tape.record("maximum", std::move(out), {a},
                     [av, floor](const Matrix&, const Matrix& g, GradSlots d) {
                       if (d[0]) *d[0] += (av->array() > floor).select(g, 0.0);
                     });
}

Var threshold_mask(const Var& a, double threshold) {
  Tape& tape = tape_of(a);
  if (tape.tracking_branches()) tape.note_branches(branch_mask(a.value(), threshold));
  const Matrix* av = &a.value();
  Matrix out = (av->array() > threshold).select(*av, 0.0);
  return tape.record("threshold_mask", std::move(out), {a},
                     [av, threshold](const Matrix&, const Matrix& g, GradSlots d) {
                       if (d[0]) *d[0] += (av->array() > threshold).select(g, 0.0);
                     });
}

Var trace_quadratic(const Var& x, const Var& m) {
  require(m.rows() == m.cols() && m.cols() == x.rows(), "trace_quadratic: M must be n x n for X n x d");
  const Matrix* xv = &x.value();
  const Matrix* mv = &m.value();
  Matrix mx = (*mv) * (*xv);
  Matrix out(1, 1);
  out(0, 0) = xv->cwiseProduct(mx).sum();
  return tape_of(x).record("trace_quadratic", std::move(out), {x, m},
                           [xv, mv](const Matrix&, const Matrix& g, GradSlots d) {
                             const double s = g(0, 0);
                             if (d[0]) d[0]->noalias() += s * ((*mv) + mv->transpose()) * (*xv);
                             if (d[1]) d[1]->noalias() += s * (*xv) * xv->transpose();
                           });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels,
                          std::span<const Index> rows) {
  require(!rows.empty(), "softmax_cross_entropy: empty node mask");
  const Matrix& z = logits.value();
  require(static_cast<Index>(labels.size()) == z.rows(),
          "softmax_cross_entropy: one label per row required");
  const Index classes = z.cols();
  const Matrix probs = softmax_rows(z);

  double total = 0.0;
  for (Index i : rows) {
    require(i >= 0 && i < z.rows(), "softmax_cross_entropy: row index out of range");
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < classes, "softmax_cross_entropy: label out of range");
    const double zmax = z.row(i).maxCoeff();
    double denom = 0.0;
    for (Index c = 0; c < classes; ++c) denom += std::exp(z(i, c) - zmax);
    total += -(z(i, y) - zmax - std::log(denom));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(rows.size());

  std::vector<Index> row_copy(rows.begin(), rows.end());
  std::vector<int> label_copy(labels.begin(), labels.end());
  return tape_of(logits).record(
      "softmax_cross_entropy", std::move(out), {logits},
      [probs, row_copy = std::move(row_copy), label_copy = std::move(label_copy)](
          const Matrix&, const Matrix& g, GradSlots d) {
        if (!d[0]) return;
        const double s = g(0, 0) / static_cast<double>(row_copy.size());
        for (Index i : row_copy) {
          d[0]->row(i) += s * probs.row(i);
          (*d[0])(i, label_copy[static_cast<std::size_t>(i)]) -= s;
        }
      });
}

Var dropout(const Var& a, double rate, bool training) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  Tape& tape = tape_of(a);
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  double* p = mask.data();
  for (Index i = 0; i < mask.size(); ++i) p[i] = keep(tape.rng()) ? inv : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return tape.record("dropout", std::move(out), {a},
                     [mask = std::move(mask)](const Matrix&, const Matrix& g, GradSlots d) {
                       if (d[0]) *d[0] += g.cwiseProduct(mask);
                     });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - zmax).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace itergraph::ops
