#include "tips/optimizer.hpp"

#include <cmath>

namespace tips {

void Sgd::step(ParamRegistry& params) {
  for (auto& [_, p] : params.items()) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr_ * p.grad[i];
  }
}

void Adam::step(ParamRegistry& params) {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (auto& [name, p] : params.items()) {
    if (!p.trainable) continue;
    auto [it, inserted] = moments_.try_emplace(name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Tensor2(p.value.rows(), p.value.cols());
      mom.v = Tensor2(p.value.rows(), p.value.cols());
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::kSgd) return std::make_unique<Sgd>(lr);
  return std::make_unique<Adam>(lr);
}

}  // namespace tips
