#include "bcl/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bcl/errors.hpp"

namespace bcl {

GradCheckResult finite_diff_check(const LossFn& loss, const ParamStore& params, double h,
                                  double floor) {
  GradMap analytic = params.zero_grads();
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: non-finite loss");

  GradCheckResult result;
  ParamStore probe = params;
  for (const auto& name : params.names()) {
    Matrix& value = probe.at(name);
    const auto grad = analytic.at(name).values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = loss(probe, nullptr);
      value.data()[i] = saved - h;
      const double down = loss(probe, nullptr);
      value.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: non-finite loss while probing " + name);
      }
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(grad[i]), std::abs(numeric), floor});
      const double rel = std::abs(grad[i] - numeric) / scale;
      if (rel > result.max_rel_error) {
        result = {rel, name, i, grad[i], numeric};
      }
    }
  }
  return result;
}

}  // namespace bcl
