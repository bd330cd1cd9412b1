#pragma once

#include <cstddef>
#include <span>

#include "bcl/numerics/matrix.hpp"

// Hot loops of the pipeline. Each kernel has an OpenMP-parallel version in
// bcl::kernels and a plain serial version in bcl::kernels::serial that the
// tests and the benchmark compare against.
//
// Every output element is produced by exactly one thread with a fixed
// summation order (ascending inner index), so results are bitwise identical
// for any thread count and for any number of rows in the batch.
namespace bcl::kernels {

// c = a * b.
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
// c = a^T * b.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
// c = a * b^T.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
Matrix transpose(const Matrix& a);

// out(i, j) = Euclidean distance between rows i and j of x.
void pairwise_distances(const Matrix& x, Matrix& out);

// out[i] = <pool row i, query>.
void dot_scores(const Matrix& pool, std::span<const double> query, std::span<double> out);

// assign[i] = index of nearest centroid (lowest index on ties); dist2[i] the
// squared distance to it.
void nearest_centroids(const Matrix& points, const Matrix& centroids,
                       std::span<std::size_t> assign, std::span<double> dist2);

// Number of threads the parallel kernels will use.
int max_threads() noexcept;

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void pairwise_distances(const Matrix& x, Matrix& out);
void dot_scores(const Matrix& pool, std::span<const double> query, std::span<double> out);
void nearest_centroids(const Matrix& points, const Matrix& centroids,
                       std::span<std::size_t> assign, std::span<double> dist2);
}  // namespace serial

}  // namespace bcl::kernels
