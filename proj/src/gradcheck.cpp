#include "trace/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace trace {

GradCheckReport check_gradient(const LossFn& loss_fn, ParamStore& params, double step) {
  GradStore grads;
  double base = loss_fn(params, &grads);
  if (!std::isfinite(base))
    throw std::runtime_error("check_gradient: loss is not finite (" + std::to_string(base) + ")");

  GradCheckReport report;
  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    const Tensor* analytic = grads.find(entry.name);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      double saved = entry.value[i];
      entry.value[i] = saved + step;
      double f_plus = loss_fn(params, nullptr);
      entry.value[i] = saved - step;
      double f_minus = loss_fn(params, nullptr);
      entry.value[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw std::runtime_error("check_gradient: perturbed loss is not finite at " + entry.name);

      double numeric = (f_plus - f_minus) / (2.0 * step);
      double a = analytic ? (*analytic)[i] : 0.0;
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      double rel = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = entry.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace trace
