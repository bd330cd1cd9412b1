#include "bcl/numerics/dense.hpp"

#include <cmath>

#include "bcl/errors.hpp"
#include "bcl/numerics/kernels.hpp"

namespace bcl {

Matrix xavier_init(std::size_t rows, std::size_t cols, RngStream& rng) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("xavier_init: zero dimension " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

Matrix dense_forward(const Matrix& weights, std::span<const double> bias, const Matrix& input,
                     Activation activation, DenseCache* cache) {
  if (input.cols() != weights.rows()) {
    throw DimensionError("dense_forward: input " + input.shape_string() + " vs weights " +
                         weights.shape_string());
  }
  if (bias.size() != weights.cols()) {
    throw DimensionError("dense_forward: bias length " + std::to_string(bias.size()) +
                         " vs weights " + weights.shape_string());
  }
  Matrix pre;
  kernels::gemm(input, weights, pre);
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    auto row = pre.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  Matrix out = pre;
  if (activation == Activation::relu) {
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  }
  if (cache != nullptr) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
    cache->activation = activation;
  }
  return out;
}

DenseGrads dense_backward(const Matrix& weights, const DenseCache& cache, const Matrix& upstream,
                          bool need_input_grad) {
  if (cache.input.cols() != weights.rows() || cache.pre_activation.cols() != weights.cols()) {
    throw DimensionError("dense_backward: cache " + cache.input.shape_string() + " -> " +
                         cache.pre_activation.shape_string() + " does not fit weights " +
                         weights.shape_string());
  }
  require_same_shape(upstream, cache.pre_activation, "dense_backward upstream");

  Matrix delta = upstream;
  if (cache.activation == Activation::relu) {
    auto d = delta.values();
    auto pre = cache.pre_activation.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(pre[i] > 0.0)) d[i] = 0.0;
    }
  }

  DenseGrads g;
  kernels::gemm_tn(cache.input, delta, g.weights);
  g.bias.assign(weights.cols(), 0.0);
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    auto row = delta.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) g.bias[j] += row[j];
  }
  if (need_input_grad) kernels::gemm_nt(delta, weights, g.input);
  return g;
}

}  // namespace bcl
