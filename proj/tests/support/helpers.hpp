#pragma once

#include <random>

#include "bcl/numerics/matrix.hpp"
#include "oracles/oracles.hpp"

namespace testing_support {

inline bcl::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen,
                                 double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  bcl::Matrix m(rows, cols);
  for (double& v : m.values()) v = u(gen);
  return m;
}

inline oracle::Mat to_rows(const bcl::Matrix& m) {
  oracle::Mat out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace testing_support
