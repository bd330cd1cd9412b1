#include "bcl/numerics/param_store.hpp"

#include "bcl/errors.hpp"

namespace bcl {

void ParamStore::add(const std::string& name, Matrix value) {
  if (params_.count(name) != 0) throw ContractError("duplicate parameter '" + name + "'");
  first_moment_[name] = Matrix(value.rows(), value.cols());
  second_moment_[name] = Matrix(value.rows(), value.cols());
  params_[name] = std::move(value);
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("no parameter named '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("no parameter named '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const auto& [_, m] : params_) s += m.squared_norm();
  return s;
}

GradMap ParamStore::zero_grads() const {
  GradMap g;
  for (const auto& [name, m] : params_) g.emplace(name, Matrix(m.rows(), m.cols()));
  return g;
}

}  // namespace bcl
