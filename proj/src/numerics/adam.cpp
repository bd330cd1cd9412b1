#include "bcl/numerics/adam.hpp"

#include <cmath>

#include "bcl/errors.hpp"

namespace bcl {

void adam_step(ParamStore& params, const GradMap& grads, const AdamOptions& options) {
  if (!(options.lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  for (const auto& [name, value] : params.params_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam_step: missing gradient for '" + name + "'");
    require_same_shape(it->second, value, ("adam_step gradient '" + name + "'").c_str());
  }

  const double t = static_cast<double>(params.step_ + 1);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (auto& [name, value] : params.params_) {
    auto g = grads.at(name).values();
    auto p = value.values();
    auto m = params.first_moment_[name].values();
    auto v = params.second_moment_[name].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
  ++params.step_;
}

}  // namespace bcl
