#pragma once

#include <map>
#include <memory>
#include <string>

#include "tips/params.hpp"

namespace tips {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update to every trainable parameter from its gradient slot.
  virtual void step(ParamRegistry& params) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParamRegistry& params) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamRegistry& params) override;

 private:
  struct Moments {
    Tensor2 m;
    Tensor2 v;
  };
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

enum class OptimizerKind { kSgd, kAdam };

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

}  // namespace tips
