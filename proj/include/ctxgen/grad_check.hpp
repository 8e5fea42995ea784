#pragma once

#include <functional>
#include <string>

#include "ctxgen/param_store.hpp"

namespace ctxgen {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central-difference check of analytic gradients. `loss_fn(params, true)`
// must return the loss and leave exact analytic gradients in the store;
// `loss_fn(params, false)` must return the loss without touching gradients.
// The callable has to be deterministic (dropout off) or the comparison is
// meaningless. Relative error per component is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(
    ParamStore& params,
    const std::function<double(ParamStore&, bool with_grad)>& loss_fn,
    double eps);

}  // namespace ctxgen
