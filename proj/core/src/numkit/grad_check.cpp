#include "itergraph/numkit/grad_check.hpp"

#include "itergraph/numkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace itergraph {
namespace {

struct Probe {
  double value;
  std::uint64_t branches;
};

Probe evaluate(const LossBuilder& loss, std::uint64_t seed) {
  Tape tape(seed);
  tape.set_grad_enabled(false);
  tape.set_branch_tracking(true);
  const Var out = loss(tape);
  return {out.scalar(), tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           const GradCheckOptions& options) {
  require(options.step >= 1e-7 && options.step <= 1e-4, "grad_check: step must lie in [1e-7, 1e-4]");
  for (Tensor* p : params) {
    require(p != nullptr && p->requires_grad, "grad_check: parameters must require gradients");
    p->zero_grad();
  }

  const Probe base = evaluate(loss, options.tape_seed);
  const Probe again = evaluate(loss, options.tape_seed);
  if (base.value != again.value || base.branches != again.branches)
    throw ContractError("grad_check: loss is not deterministic for a fixed tape seed");

  {
    Tape tape(options.tape_seed);
    const Var out = loss(tape);
    tape.backward(out);
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.sample_seed);
  const double h = options.step;
  for (Tensor* p : params) {
    std::vector<Index> coords(static_cast<std::size_t>(p->value.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    std::shuffle(coords.begin(), coords.end(), rng);

    std::size_t taken = 0;
    for (Index c : coords) {
      if (taken >= options.max_coords_per_param) break;
      double& x = p->value.data()[c];
      const double saved = x;
      x = saved + h;
      const Probe plus = evaluate(loss, options.tape_seed);
      x = saved - h;
      const Probe minus = evaluate(loss, options.tape_seed);
      x = saved;
      if (plus.branches != base.branches || minus.branches != base.branches) {
        ++result.rejected;
        continue;
      }
      ++taken;
      ++result.checked;
      const double numeric = (plus.value - minus.value) / (2.0 * h);
      const double analytic = p->grad.data()[c];
      const double err =
          std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + options.floor);
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(result.max_relative_error, err);
        result.worst_param = p->name;
        result.worst_index = c;
      }
    }
  }
  return result;
}

}  // namespace itergraph
