#ifndef TRACE_GRADCHECK_HPP
#define TRACE_GRADCHECK_HPP

#include <functional>
#include <string>

#include "trace/params.hpp"

namespace trace {

/// Scalar loss over a parameter store. When `grads` is non-null the function
/// must also accumulate d(loss)/d(theta) for every trainable leaf it uses.
/// Must be deterministic across calls (dropout off or mask frozen).
using LossFn = std::function<double(const ParamStore&, GradStore*)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool ok(double rel_tol) const { return max_rel_error < rel_tol; }
};

/// Compares the reverse-mode gradient of every trainable scalar against the
/// central difference (f(x+h) - f(x-h)) / 2h. Relative error uses
/// |a - n| / max(|a|, |n|, 1e-3); the floor keeps finite-difference roundoff
/// from dominating near-zero gradients.
GradCheckReport check_gradient(const LossFn& loss_fn, ParamStore& params, double step = 1e-5);

}  // namespace trace

#endif
