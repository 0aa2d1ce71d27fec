#include "tips/params.hpp"

#include <cmath>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

Param& ParamRegistry::add(const std::string& name, Tensor2 value, bool trainable) {
  if (contains(name)) throw PreconditionError(fmt::format("duplicate parameter '{}'", name));
  Tensor2 grad(value.rows(), value.cols());
  auto [it, _] = params_.emplace(name, Param{std::move(value), std::move(grad), trainable});
  return it->second;
}

Param& ParamRegistry::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw IndexError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

const Param& ParamRegistry::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw IndexError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

void ParamRegistry::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

double ParamRegistry::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_) {
    for (double g : p.grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

std::size_t ParamRegistry::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

}  // namespace tips
