#pragma once

#include "itergraph/numkit/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace itergraph {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  // Dense value; a contract error for sparse nodes.
  const Matrix& value() const;
  const SparseMatrix& sparse() const;
  bool is_sparse() const;
  // Dense copy of either kind.
  Matrix dense() const;
  Index rows() const;
  Index cols() const;
  // Value of a 1x1 result.
  double scalar() const;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient slots handed to a backward function, one per recorded input, in
// recording order. A slot is nullptr when that input needs no gradient;
// otherwise it points at a zero-initialized accumulator of the input's shape.
// Sparse nodes carry gradients only for their stored entries: an nnz x 1
// column in storage order.
using GradSlots = std::span<Matrix* const>;

// out_value: the recorded forward value. grad_out: d(loss)/d(out_value).
using BackwardFn =
    std::function<void(const Matrix& out_value, const Matrix& grad_out, GradSlots grad_in)>;
using SparseBackwardFn =
    std::function<void(const SparseMatrix& out_value, const Matrix& grad_out, GradSlots grad_in)>;

// Ordered record of primitive operations for reverse-mode differentiation.
//
// A tape is single-use: record a forward computation, call backward() once on
// a scalar result, then discard. Leaves reference external Tensors and receive
// accumulated gradients in Tensor::grad. Values live until the tape is
// destroyed, so Vars stay readable after backward().
class Tape {
 public:
  explicit Tape(std::uint64_t seed = 0);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a parameter. Gradients flow into t.grad iff t.requires_grad and
  // gradient recording is enabled.
  Var leaf(Tensor& t);
  Var constant(Matrix value);
  Var constant(SparseMatrix value);

  // Appends an operation. `backward` is dropped when no input needs a gradient.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  // Same for an operation with a sparse result; its pattern is fixed.
  Var record_sparse(std::string_view op, SparseMatrix value, std::initializer_list<Var> inputs,
                    SparseBackwardFn backward);

  // Propagates d(loss)/d(.) to every leaf. Consumes the tape.
  void backward(const Var& loss);

  // Disabling makes every subsequent node a constant (inference mode).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(const Var& v) const;

  // Source of randomness for stochastic ops (dropout); seeded at construction.
  std::mt19937_64& rng() { return rng_; }

  // Threshold-style ops fold their branch masks in here when tracking is on
  // (off by default; hashing n^2 masks is not free). Two evaluations with
  // equal signatures took the same branch at every kink.
  void set_branch_tracking(bool enabled) { track_branches_ = enabled; }
  bool tracking_branches() const { return track_branches_; }
  void note_branches(std::span<const std::uint8_t> mask);
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  friend class Var;

  struct Node {
    std::string op;
    Matrix value;
    SparseMatrix sparse;
    bool is_sparse = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    SparseBackwardFn sparse_backward;
    Tensor* leaf = nullptr;
    bool needs_grad = false;
  };

  const Node& node(const Var& v) const;
  Var push(Node n, std::initializer_list<Var> inputs);

  std::deque<Node> nodes_;
  std::mt19937_64 rng_;
  std::uint64_t branch_signature_ = 1469598103934665603ULL;
  bool grad_enabled_ = true;
  bool track_branches_ = false;
  bool consumed_ = false;
};

}  // namespace itergraph
