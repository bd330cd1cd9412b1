#include "bcl/contrastive/info_nce.hpp"

#include <cmath>
#include <vector>

#include "bcl/errors.hpp"

namespace bcl {
namespace {

std::vector<double> row_norms(const Matrix& z) {
  std::vector<double> n(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (double v : z.row(i)) s += v * v;
    n[i] = std::sqrt(s);
  }
  return n;
}

}  // namespace

InfoNceResult info_nce(const Matrix& first, const Matrix& second, double tau,
                       bool include_positive, bool want_grads) {
  require_same_shape(first, second, "info_nce");
  const std::size_t n = first.rows(), dim = first.cols();
  if (!(tau > 0.0)) throw ContractError("info_nce: temperature must be positive");
  if (n < 2 && !include_positive) {
    throw ContractError("info_nce: the positive-excluded form needs at least 2 pairs");
  }
  if (n == 0) throw ContractError("info_nce: empty batch");

  const auto n1 = row_norms(first);
  const auto n2 = row_norms(second);

  // Cosine similarity matrix.
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (n1[i] == 0.0 || n2[k] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < dim; ++t) dot += first(i, t) * second(k, t);
      sim(i, k) = dot / (n1[i] * n2[k]);
    }
  }

  InfoNceResult result;
  // d loss / d sim(i, k) = (p_ik - [k == i]) / tau, p the softmax over D_i.
  Matrix dsim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < n; ++k)
      if (include_positive || k != i) mx = std::max(mx, sim(i, k) / tau);
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (include_positive || k != i) z += std::exp(sim(i, k) / tau - mx);
    const double log_denominator = mx + std::log(z);
    result.loss += -sim(i, i) / tau + log_denominator;
    for (std::size_t k = 0; k < n; ++k) {
      double p = 0.0;
      if (include_positive || k != i) p = std::exp(sim(i, k) / tau - log_denominator);
      dsim(i, k) = (p - (k == i ? 1.0 : 0.0)) / tau;
    }
  }
  if (!want_grads) return result;

  // sim = <u, v> / (|u| |v|):  d sim / d u = v / (|u||v|) - sim * u / |u|^2.
  result.grad_first = Matrix(n, dim);
  result.grad_second = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (n1[i] == 0.0) continue;
    auto gu = result.grad_first.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      if (n2[k] == 0.0 || dsim(i, k) == 0.0) continue;
      const double a = dsim(i, k) / (n1[i] * n2[k]);
      const double b = dsim(i, k) * sim(i, k) / (n1[i] * n1[i]);
      for (std::size_t t = 0; t < dim; ++t) gu[t] += a * second(k, t) - b * first(i, t);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (n2[k] == 0.0) continue;
    auto gv = result.grad_second.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (n1[i] == 0.0 || dsim(i, k) == 0.0) continue;
      const double a = dsim(i, k) / (n1[i] * n2[k]);
      const double b = dsim(i, k) * sim(i, k) / (n2[k] * n2[k]);
      for (std::size_t t = 0; t < dim; ++t) gv[t] += a * first(i, t) - b * second(k, t);
    }
  }
  return result;
}

}  // namespace bcl
