#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bcl/numerics/matrix.hpp"

namespace bcl {

using GradMap = std::map<std::string, Matrix>;

struct AdamOptions;
class ParamStore;
void adam_step(ParamStore& params, const GradMap& grads, const AdamOptions& options);

// Named trainable tensors plus the Adam moment accumulators that shadow them.
class ParamStore {
 public:
  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;

  const std::map<std::string, Matrix>& tensors() const noexcept { return params_; }
  std::vector<std::string> names() const;

  std::uint64_t step() const noexcept { return step_; }
  // Sum of squares over every tensor.
  double squared_norm() const;

  // Zero gradient map with one entry per tensor.
  GradMap zero_grads() const;

 private:
  friend void adam_step(ParamStore&, const GradMap&, const AdamOptions&);

  std::map<std::string, Matrix> params_;
  std::map<std::string, Matrix> first_moment_;
  std::map<std::string, Matrix> second_moment_;
  std::uint64_t step_ = 0;
};

}  // namespace bcl
