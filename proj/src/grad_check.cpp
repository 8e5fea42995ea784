#include "ctxgen/grad_check.hpp"

#include <cmath>
#include <vector>

namespace ctxgen {

GradCheckResult grad_check(
    ParamStore& params,
    const std::function<double(ParamStore&, bool with_grad)>& loss_fn,
    double eps) {
  params.zero_grads();
  const double base = loss_fn(params, true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");

  // Snapshot analytic gradients before the perturbation sweeps overwrite
  // anything.
  std::vector<Tensor> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad);

  GradCheckResult result;
  for (std::size_t p = 0; p < params.entries().size(); ++p) {
    auto& entry = params.entries()[p];
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double saved = entry.value[i];
      entry.value[i] = saved + eps;
      const double plus = loss_fn(params, false);
      entry.value[i] = saved - eps;
      const double minus = loss_fn(params, false);
      entry.value[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite loss at '" + entry.name +
                           "'");
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[p][i];
      const double rel =
          std::abs(a - numeric) /
          std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = entry.name;
        result.worst_index = i;
      }
    }
  }

  // Leave the analytic gradients in place for the caller.
  for (std::size_t p = 0; p < params.entries().size(); ++p) {
    params.entries()[p].grad = analytic[p];
  }
  return result;
}

}  // namespace ctxgen
