#pragma once

#include <functional>
#include <string>

#include "bcl/numerics/param_store.hpp"

namespace bcl {

// Loss callback for the finite-difference oracle. When grads is non-null the
// callback also fills analytic gradients for every tensor.
using LossFn = std::function<double(const ParamStore& params, GradMap* grads)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences (f(t+h) - f(t-h)) / 2h against the analytic gradient
// at every coordinate. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult finite_diff_check(const LossFn& loss, const ParamStore& params, double h = 1e-5,
                                  double floor = 1e-6);

}  // namespace bcl
