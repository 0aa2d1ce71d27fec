#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tips/params.hpp"
#include "tips/tape.hpp"

namespace tips {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor of the relative error, so entries whose true gradient is
  // ~0 are judged on absolute error.
  double floor = 1e-6;
  // 0 checks every entry of every parameter.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool frozen = false;
  // Frozen parameters must receive an exactly zero analytic gradient.
  bool frozen_grad_zero = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const;
  std::size_t num_params_passing() const;
};

/// Builds the loss on a fresh tape from the current registry values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `loss` against central finite
/// differences for every entry of every parameter. Restores all values.
GradCheckReport grad_check(const LossBuilder& loss, ParamRegistry& params, double tolerance,
                           const GradCheckOptions& options = {});

}  // namespace tips
