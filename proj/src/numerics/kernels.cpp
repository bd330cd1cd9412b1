#include "bcl/numerics/kernels.hpp"

#include <omp.h>
#ifdef __FMA__
#include <immintrin.h>
#endif

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "bcl/errors.hpp"

namespace bcl::kernels {
namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

using Lane = double __attribute__((vector_size(32)));
constexpr std::size_t kLane = sizeof(Lane) / sizeof(double);

inline Lane load_lane(const double* p) {
  Lane v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// acc + a * b. Fused where the target has FMA; every matrix product, serial
// or parallel, accumulates through these so the two paths round alike.
#ifdef __FMA__
inline double madd(double acc, double a, double b) { return std::fma(a, b, acc); }
inline Lane madd(Lane acc, double a, Lane b) {
  return _mm256_fmadd_pd(_mm256_set1_pd(a), b, acc);
}
#else
inline double madd(double acc, double a, double b) { return acc + a * b; }
inline Lane madd(Lane acc, double a, Lane b) { return acc + a * b; }
#endif

// Register tile of c = a * b. Each accumulator starts at zero and adds its
// products in ascending k, the same order as the serial reference.
inline void gemm_tile(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, std::size_t depth) {
  constexpr std::size_t lanes = kTileCols / kLane;
  Lane acc[kTileRows][lanes] = {};
  for (std::size_t k = 0; k < depth; ++k) {
    const double* bk = b + k * ldb;
    Lane bv[lanes];
    for (std::size_t l = 0; l < lanes; ++l) bv[l] = load_lane(bk + l * kLane);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double ar = a[r * lda + k];
      for (std::size_t l = 0; l < lanes; ++l) acc[r][l] = madd(acc[r][l], ar, bv[l]);
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r)
    for (std::size_t l = 0; l < lanes; ++l)
      std::memcpy(c + r * ldc + l * kLane, &acc[r][l], sizeof(Lane));
}

inline void gemm_edge(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, std::size_t depth, std::size_t nr,
                      std::size_t nc) {
  double acc[kTileRows][kTileCols] = {};
  for (std::size_t k = 0; k < depth; ++k) {
    const double* bk = b + k * ldb;
    for (std::size_t r = 0; r < nr; ++r) {
      const double ar = a[r * lda + k];
      for (std::size_t j = 0; j < nc; ++j) acc[r][j] = madd(acc[r][j], ar, bk[j]);
    }
  }
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t j = 0; j < nc; ++j) c[r * ldc + j] = acc[r][j];
}

void check_gemm(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.rows()) {
    throw DimensionError(std::string(what) + ": inner dimensions differ (" + a.shape_string() +
                         " * " + b.shape_string() + ")");
  }
}

void prepare_output(Matrix& c, std::size_t rows, std::size_t cols) {
  if (c.rows() != rows || c.cols() != cols) c = Matrix(rows, cols);
}

}  // namespace

int max_threads() noexcept { return omp_get_max_threads(); }

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
  check_gemm(a, b, "gemm");
  const std::size_t m = a.rows(), n = b.cols(), depth = a.cols();
  prepare_output(c, m, n);
  const double* ap = a.data();
  double* cp = c.data();
  const std::size_t panels = (n + kTileCols - 1) / kTileCols;
  const std::ptrdiff_t row_blocks = static_cast<std::ptrdiff_t>((m + kTileRows - 1) / kTileRows);

  // b repacked as contiguous depth x 16 column panels, zero padded on the
  // right, so the tile loop streams through memory.
  std::vector<double> packed(panels * depth * kTileCols, 0.0);
  for (std::size_t p = 0; p < panels; ++p) {
    const std::size_t j0 = p * kTileCols, nc = std::min(kTileCols, n - j0);
    double* dst = packed.data() + p * depth * kTileCols;
    for (std::size_t k = 0; k < depth; ++k)
      std::memcpy(dst + k * kTileCols, b.data() + k * n + j0, nc * sizeof(double));
  }

#pragma omp parallel for schedule(static) if (m * n * depth > 32768)
  for (std::ptrdiff_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kTileRows;
    const std::size_t nr = std::min(kTileRows, m - i0);
    for (std::size_t p = 0; p < panels; ++p) {
      const std::size_t j0 = p * kTileCols, nc = std::min(kTileCols, n - j0);
      const double* at = ap + i0 * depth;
      const double* bt = packed.data() + p * depth * kTileCols;
      double* ct = cp + i0 * n + j0;
      if (nr == kTileRows && nc == kTileCols) {
        gemm_tile(at, depth, bt, kTileCols, ct, n, depth);
      } else {
        gemm_edge(at, depth, bt, kTileCols, ct, n, depth, nr, nc);
      }
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) {
    throw DimensionError("gemm_tn: row counts differ (" + a.shape_string() + " vs " +
                         b.shape_string() + ")");
  }
  gemm(transpose(a), b, c);
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) {
    throw DimensionError("gemm_nt: column counts differ (" + a.shape_string() + " vs " +
                         b.shape_string() + ")");
  }
  gemm(a, transpose(b), c);
}

void pairwise_distances(const Matrix& x, Matrix& out) {
  const std::size_t n = x.rows(), p = x.cols();
  prepare_output(out, n, n);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * n * p > 32768)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      // Symmetric by construction: the (i, j) and (j, i) sums visit the same
      // terms in the same order.
      const std::size_t lo = std::min(i, j), hi = std::max(i, j);
      const auto xl = x.row(lo);
      const auto xh = x.row(hi);
      double s = 0.0;
      for (std::size_t t = 0; t < p; ++t) {
        const double d = xl[t] - xh[t];
        s += d * d;
      }
      out(i, j) = std::sqrt(s);
    }
  }
}

void dot_scores(const Matrix& pool, std::span<const double> query, std::span<double> out) {
  if (query.size() != pool.cols() || out.size() != pool.rows()) {
    throw DimensionError("dot_scores: pool " + pool.shape_string() + ", query " +
                         std::to_string(query.size()) + ", out " + std::to_string(out.size()));
  }
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(pool.rows());
  const std::size_t d = pool.cols();
#pragma omp parallel for schedule(static) if (pool.size() > 65536)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const double* r = pool.data() + static_cast<std::size_t>(ii) * d;
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) s += r[t] * query[t];
    out[static_cast<std::size_t>(ii)] = s;
  }
}

void nearest_centroids(const Matrix& points, const Matrix& centroids,
                       std::span<std::size_t> assign, std::span<double> dist2) {
  if (points.cols() != centroids.cols() || assign.size() != points.rows() ||
      dist2.size() != points.rows()) {
    throw DimensionError("nearest_centroids: points " + points.shape_string() + ", centroids " +
                         centroids.shape_string());
  }
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(points.rows());
  const std::size_t d = points.cols(), k = centroids.rows();
#pragma omp parallel for schedule(static) if (points.rows() * k * d > 65536)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const double* x = points.data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double* mu = centroids.data() + c * d;
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x[t] - mu[t];
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        arg = c;
      }
    }
    assign[i] = arg;
    dist2[i] = best;
  }
}

namespace serial {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
  check_gemm(a, b, "serial::gemm");
  prepare_output(c, a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s = madd(s, a(i, k), b(k, j));
      c(i, j) = s;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) throw DimensionError("serial::gemm_tn: row counts differ");
  prepare_output(c, a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) s = madd(s, a(k, i), b(k, j));
      c(i, j) = s;
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw DimensionError("serial::gemm_nt: column counts differ");
  prepare_output(c, a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s = madd(s, a(i, k), b(j, k));
      c(i, j) = s;
    }
  }
}

void pairwise_distances(const Matrix& x, Matrix& out) {
  prepare_output(out, x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < x.cols(); ++t) {
        const double d = x(i, t) - x(j, t);
        s += d * d;
      }
      out(i, j) = std::sqrt(s);
    }
  }
}

void dot_scores(const Matrix& pool, std::span<const double> query, std::span<double> out) {
  if (query.size() != pool.cols() || out.size() != pool.rows())
    throw DimensionError("serial::dot_scores: shape mismatch");
  for (std::size_t i = 0; i < pool.rows(); ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < pool.cols(); ++t) s += pool(i, t) * query[t];
    out[i] = s;
  }
}

void nearest_centroids(const Matrix& points, const Matrix& centroids,
                       std::span<std::size_t> assign, std::span<double> dist2) {
  if (points.cols() != centroids.cols() || assign.size() != points.rows() ||
      dist2.size() != points.rows())
    throw DimensionError("serial::nearest_centroids: shape mismatch");
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < points.cols(); ++t) {
        const double d = points(i, t) - centroids(c, t);
        s += d * d;
      }
      if (s < best) {
        best = s;
        arg = c;
      }
    }
    assign[i] = arg;
    dist2[i] = best;
  }
}

}  // namespace serial
}  // namespace bcl::kernels
