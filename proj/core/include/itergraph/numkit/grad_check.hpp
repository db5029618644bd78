#pragma once

#include "itergraph/numkit/tape.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace itergraph {

// Builds a scalar loss on the supplied tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double step = 1e-6;                       // central-difference h, within [1e-7, 1e-4]
  double floor = 1e-8;                      // denominator floor of the relative error
  std::size_t max_coords_per_param = 64;    // all coordinates when the tensor is smaller
  std::uint64_t sample_seed = 17;
  std::uint64_t tape_seed = 0;              // seeds dropout identically on every evaluation
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t rejected = 0;                 // coordinates whose +-h probes crossed a kink
  std::string worst_param;
  Index worst_index = -1;
};

// Compares reverse-mode gradients with central finite differences,
// |analytic - numeric| / (|analytic| + |numeric| + floor), maximized over the
// sampled coordinates. Coordinates where a +-h perturbation changes any
// threshold branch on the tape are skipped. Throws ContractError when two
// evaluations at the same point disagree (unseeded randomness in the builder).
GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           const GradCheckOptions& options = {});

}  // namespace itergraph
