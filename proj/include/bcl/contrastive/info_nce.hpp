#pragma once

#include "bcl/numerics/matrix.hpp"

namespace bcl {

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_first;   // d loss / d z', empty unless requested
  Matrix grad_second;  // d loss / d z''
};

// Contrastive loss over N paired views, summed over anchors i:
//   -log( exp(s_ii / tau) / sum_{k in D_i} exp(s_ik / tau) ),
// s = cosine similarity between z'_i and z''_k. With include_positive off,
// D_i = {k != i} (the positive is left out of the denominator, so the loss
// can be negative); with it on, D_i is every k. A zero-norm row has cosine 0
// to everything and receives zero gradient.
InfoNceResult info_nce(const Matrix& first, const Matrix& second, double tau,
                       bool include_positive, bool want_grads = true);

}  // namespace bcl
