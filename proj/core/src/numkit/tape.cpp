#include "itergraph/numkit/tape.hpp"

#include "itergraph/numkit/errors.hpp"

#include <utility>

namespace itergraph {

const Matrix& Var::value() const {
  require(tape_ != nullptr, "Var: use of an empty handle");
  const auto& n = tape_->node(*this);
  require(!n.is_sparse, "Var::value: node '" + n.op + "' is sparse");
  return n.value;
}

const SparseMatrix& Var::sparse() const {
  require(tape_ != nullptr, "Var: use of an empty handle");
  const auto& n = tape_->node(*this);
  require(n.is_sparse, "Var::sparse: node '" + n.op + "' is dense");
  return n.sparse;
}

bool Var::is_sparse() const {
  require(tape_ != nullptr, "Var: use of an empty handle");
  return tape_->node(*this).is_sparse;
}

Matrix Var::dense() const { return is_sparse() ? Matrix(sparse()) : value(); }

Index Var::rows() const { return is_sparse() ? sparse().rows() : value().rows(); }
Index Var::cols() const { return is_sparse() ? sparse().cols() : value().cols(); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::scalar: value is not 1x1");
  return v(0, 0);
}

bool Var::requires_grad() const {
  require(tape_ != nullptr, "Var: use of an empty handle");
  return tape_->node(*this).needs_grad;
}

Tape::Tape(std::uint64_t seed) : rng_(seed) {}

const Tape::Node& Tape::node(const Var& v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), "Var does not belong to this tape");
  return nodes_[v.id_];
}

std::string_view Tape::op_name(const Var& v) const { return node(v).op; }

Var Tape::leaf(Tensor& t) {
  require(!consumed_, "Tape::leaf: tape already consumed");
  Node n;
  n.op = "leaf:" + t.name;
  n.value = t.value;
  n.needs_grad = grad_enabled_ && t.requires_grad;
  if (n.needs_grad) {
    n.leaf = &t;
    if (t.grad.rows() != t.value.rows() || t.grad.cols() != t.value.cols()) t.zero_grad();
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  require(!consumed_, "Tape::constant: tape already consumed");
  Node n;
  n.op = "const";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(SparseMatrix value) {
  require(!consumed_, "Tape::constant: tape already consumed");
  Node n;
  n.op = "const";
  value.makeCompressed();
  n.sparse = std::move(value);
  n.is_sparse = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  n.backward = std::move(backward);
  return push(std::move(n), inputs);
}

Var Tape::record_sparse(std::string_view op, SparseMatrix value, std::initializer_list<Var> inputs,
                        SparseBackwardFn backward) {
  Node n;
  n.op = std::string(op);
  value.makeCompressed();
  n.sparse = std::move(value);
  n.is_sparse = true;
  n.sparse_backward = std::move(backward);
  return push(std::move(n), inputs);
}

Var Tape::push(Node n, std::initializer_list<Var> inputs) {
  require(!consumed_, "Tape::record: tape already consumed");
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    require(in.tape_ == this, "Tape::record: input from another tape");
    n.inputs.push_back(in.id_);
    n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
  }
  n.needs_grad = n.needs_grad && grad_enabled_;
  if (!n.needs_grad) {
    n.backward = nullptr;
    n.sparse_backward = nullptr;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  require(!consumed_, "Tape::backward: tape already consumed");
  require(!nodes_.empty(), "Tape::backward: nothing was recorded");
  const Node& out = node(loss);
  require(!out.is_sparse && out.value.rows() == 1 && out.value.cols() == 1,
          "Tape::backward: loss is not a scalar");
  consumed_ = true;
  if (!out.needs_grad) return;

  std::vector<Matrix> grads(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  grads[loss.id_] = Matrix::Ones(1, 1);
  live[loss.id_] = true;

  std::vector<Matrix*> slots;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    if (!live[i]) continue;
    Node& n = nodes_[i];
    if (n.leaf != nullptr) {
      n.leaf->grad += grads[i];
    } else if (n.backward || n.sparse_backward) {
      slots.assign(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t in = n.inputs[k];
        if (!nodes_[in].needs_grad) continue;
        if (!live[in]) {
          const Node& src = nodes_[in];
          if (src.is_sparse) {
            grads[in].setZero(src.sparse.nonZeros(), 1);
          } else {
            grads[in].setZero(src.value.rows(), src.value.cols());
          }
          live[in] = true;
        }
        slots[k] = &grads[in];
      }
      if (n.is_sparse) {
        n.sparse_backward(n.sparse, grads[i], GradSlots(slots.data(), slots.size()));
      } else {
        n.backward(n.value, grads[i], GradSlots(slots.data(), slots.size()));
      }
      n.backward = nullptr;
      n.sparse_backward = nullptr;
    }
    grads[i] = Matrix();
    live[i] = false;
  }
}

void Tape::note_branches(std::span<const std::uint8_t> mask) {
  if (!track_branches_) return;
  // FNV-1a
  for (std::uint8_t b : mask) {
    branch_signature_ ^= b;
    branch_signature_ *= 1099511628211ULL;
  }
  branch_signature_ ^= mask.size();
  branch_signature_ *= 1099511628211ULL;
}

}  // namespace itergraph
