#include "itergraph/numkit/adam.hpp"

#include "itergraph/numkit/errors.hpp"

#include <cmath>
#include <utility>

namespace itergraph {

Adam::Adam(std::vector<Tensor*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  require(options_.learning_rate > 0.0, "Adam: learning rate must be positive");
  require(options_.beta1 >= 0.0 && options_.beta1 < 1.0, "Adam: beta1 must lie in [0, 1)");
  require(options_.beta2 >= 0.0 && options_.beta2 < 1.0, "Adam: beta2 must lie in [0, 1)");
  require(options_.weight_decay >= 0.0, "Adam: weight decay must be nonnegative");
  for (Tensor* p : params_) {
    require(p != nullptr, "Adam: null parameter");
    first_.push_back(Matrix::Zero(p->rows(), p->cols()));
    second_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step() {
  for (const Tensor* p : params_) {
    require(p->grad.rows() == p->rows() && p->grad.cols() == p->cols(),
            "Adam: gradient shape mismatch for '" + p->name + "'");
    if (!p->grad.allFinite()) throw NumericalError("Adam: non-finite gradient in parameter '" + p->name + "'");
  }
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    if (!p.requires_grad) continue;
    const Matrix g = p.grad + options_.weight_decay * p.value;
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g.cwiseAbs2();
    p.value.array() -= options_.learning_rate * (first_[i].array() / correction1) /
                       ((second_[i].array() / correction2).sqrt() + options_.epsilon);
  }
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace itergraph
