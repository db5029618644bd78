#pragma once

#include "itergraph/numkit/tensor.hpp"

#include <cstdint>
#include <vector>

namespace itergraph {

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L2 coefficient added to the raw gradient (coupled, not decoupled AdamW).
  double weight_decay = 0.0;
};

// Adam over a fixed set of parameters. The optimizer does not own the tensors;
// they must outlive it.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions options);

  // One bias-corrected update from each tensor's current grad. Throws
  // NumericalError naming the parameter if a gradient is not finite.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const Matrix& first_moment(std::size_t i) const { return first_[i]; }
  const Matrix& second_moment(std::size_t i) const { return second_[i]; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

}  // namespace itergraph
