#pragma once

#include "bcl/numerics/param_store.hpp"

namespace bcl {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update on every tensor in params. Every tensor
// must have a same-shaped gradient; the step counter advances by one.
void adam_step(ParamStore& params, const GradMap& grads, const AdamOptions& options);

}  // namespace bcl
