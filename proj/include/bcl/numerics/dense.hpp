#pragma once

#include <span>
#include <vector>

#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/rng.hpp"

namespace bcl {

enum class Activation { identity, relu };

// Xavier-uniform: entries ~ U(-L, L), L = sqrt(6 / (rows + cols)).
Matrix xavier_init(std::size_t rows, std::size_t cols, RngStream& rng);

// Forward values kept for the backward pass.
struct DenseCache {
  Matrix input;
  Matrix pre_activation;
  Activation activation = Activation::identity;
};

struct DenseGrads {
  Matrix weights;             // in x out
  std::vector<double> bias;   // out, summed over the batch
  Matrix input;               // batch x in
};

// output = act(input * weights + bias); weights are (in x out).
Matrix dense_forward(const Matrix& weights, std::span<const double> bias, const Matrix& input,
                     Activation activation, DenseCache* cache = nullptr);

// Chain rule through one dense layer. Relu gates on pre-activation > 0.
// When need_input_grad is false the returned input gradient is empty.
DenseGrads dense_backward(const Matrix& weights, const DenseCache& cache, const Matrix& upstream,
                          bool need_input_grad = true);

}  // namespace bcl
