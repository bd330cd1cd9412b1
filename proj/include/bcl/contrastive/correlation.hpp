#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bcl/numerics/matrix.hpp"

namespace bcl {

// Sample distance correlation between paired samples (rows) of x (N x p)
// and y (N x q): V-statistic distance covariance over double-centered
// Euclidean distance matrices, dCor = dCov / sqrt(dVar_x * dVar_y).
// Returns 0 when either distance variance is 0. Requires N >= 2.
double distance_correlation(const Matrix& x, const Matrix& y);

// k x k feature-correlation snapshot over a batch of k x d stacks: entry
// (i, j) is the distance correlation between feature i and feature j across
// the batch. Symmetric, unit diagonal.
Matrix correlation_snapshot(std::span<const Matrix> stacks);

// The bootstrapped feature-correlation matrix.
struct CorrelationMatrix {
  Matrix values;
  std::uint64_t last_refresh_step = 0;
  bool initialized = false;
};

// values <- alpha * values + (1 - alpha) * snapshot. An uninitialized matrix
// adopts the snapshot wholesale.
CorrelationMatrix ema_update(const CorrelationMatrix& current, const Matrix& snapshot, double alpha,
                             std::uint64_t step);

// Tab-separated k x k table with a header row of feature names.
void write_correlation_tsv(std::ostream& out, const Matrix& values,
                           const std::vector<std::string>& names);

}  // namespace bcl
