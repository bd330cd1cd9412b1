#include "bcl/contrastive/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bcl/errors.hpp"
#include "bcl/numerics/kernels.hpp"

namespace bcl {
namespace {

// Double-centered Euclidean distance matrix of the rows of x.
Matrix centered_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix a;
  kernels::pairwise_distances(x, a);
  std::vector<double> mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a(i, j);
    mean[i] = s / static_cast<double>(n);
    grand += s;
  }
  grand /= static_cast<double>(n * n);
  // The distance matrix is symmetric, so row means double as column means.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = a(i, j) - mean[i] - mean[j] + grand;
  return a;
}

// Squared V-statistic distance covariance: mean of the elementwise product.
double mean_product(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return std::max(0.0, s / static_cast<double>(av.size()));
}

double dcor_from(double dcov2, double dvar2_x, double dvar2_y) {
  if (dvar2_x <= 0.0 || dvar2_y <= 0.0) return 0.0;
  const double r = std::sqrt(dcov2 / std::sqrt(dvar2_x * dvar2_y));
  return std::min(1.0, r);
}

}  // namespace

double distance_correlation(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw ContractError("distance_correlation: row counts differ (" + x.shape_string() + " vs " +
                        y.shape_string() + ")");
  }
  if (x.rows() < 2) throw ContractError("distance_correlation: needs at least 2 samples");
  const Matrix a = centered_distances(x);
  const Matrix b = centered_distances(y);
  return dcor_from(mean_product(a, b), mean_product(a, a), mean_product(b, b));
}

Matrix correlation_snapshot(std::span<const Matrix> stacks) {
  if (stacks.size() < 2) throw ContractError("correlation_snapshot: needs at least 2 stacks");
  const std::size_t k = stacks[0].rows(), d = stacks[0].cols(), n = stacks.size();
  for (const auto& s : stacks) {
    if (s.rows() != k || s.cols() != d)
      throw DimensionError("correlation_snapshot: ragged stacks " + s.shape_string());
  }

  std::vector<Matrix> centered(k);
  std::vector<double> dvar2(k);
  const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ff = 0; ff < kk; ++ff) {
    const std::size_t f = static_cast<std::size_t>(ff);
    Matrix feature(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto src = stacks[i].row(f);
      std::copy(src.begin(), src.end(), feature.row(i).begin());
    }
    centered[f] = centered_distances(feature);
    dvar2[f] = mean_product(centered[f], centered[f]);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);

  Matrix s(k, k);
  const std::ptrdiff_t np = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < np; ++p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    const double v = dcor_from(mean_product(centered[i], centered[j]), dvar2[i], dvar2[j]);
    s(i, j) = v;
    s(j, i) = v;
  }
  for (std::size_t i = 0; i < k; ++i) s(i, i) = 1.0;
  return s;
}

CorrelationMatrix ema_update(const CorrelationMatrix& current, const Matrix& snapshot, double alpha,
                             std::uint64_t step) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("ema_update: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (snapshot.rows() != snapshot.cols()) {
    throw DimensionError("ema_update: snapshot must be square, got " + snapshot.shape_string());
  }
  CorrelationMatrix next;
  next.last_refresh_step = step;
  next.initialized = true;
  if (!current.initialized) {
    next.values = snapshot;
    return next;
  }
  require_same_shape(current.values, snapshot, "ema_update");
  next.values = Matrix(snapshot.rows(), snapshot.cols());
  auto out = next.values.values();
  auto c = current.values.values();
  auto s = snapshot.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * c[i] + (1.0 - alpha) * s[i];
  return next;
}

void write_correlation_tsv(std::ostream& out, const Matrix& values,
                           const std::vector<std::string>& names) {
  if (values.rows() != values.cols() || names.size() != values.rows()) {
    throw DimensionError("correlation export: " + values.shape_string() + " with " +
                         std::to_string(names.size()) + " names");
  }
  out << "feature";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < values.rows(); ++i) {
    out << names[i];
    for (std::size_t j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", values(i, j));
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace bcl
