#pragma once

#include <map>
#include <string>
#include <vector>

#include "tips/tensor.hpp"

namespace tips {

struct Param {
  Tensor2 value;
  Tensor2 grad;  // always the shape of value
  bool trainable = true;
};

// Named parameters with one gradient slot each. Iteration order is by name so
// checkpoints and optimizer state are deterministic.
class ParamRegistry {
 public:
  Param& add(const std::string& name, Tensor2 value, bool trainable = true);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  Tensor2& value(const std::string& name) { return at(name).value; }
  const Tensor2& value(const std::string& name) const { return at(name).value; }
  Tensor2& grad(const std::string& name) { return at(name).grad; }

  void set_trainable(const std::string& name, bool trainable) { at(name).trainable = trainable; }

  void zero_grad();
  double grad_norm() const;
  std::size_t num_values() const;
  std::vector<std::string> names() const;

  std::map<std::string, Param>& items() { return params_; }
  const std::map<std::string, Param>& items() const { return params_; }

 private:
  std::map<std::string, Param> params_;
};

}  // namespace tips
