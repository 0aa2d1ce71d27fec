#include "tips/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "tips/errors.hpp"

namespace tips {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [this](const GradCheckEntry& e) {
    return e.frozen ? e.frozen_grad_zero : e.max_rel_error <= tolerance;
  });
}

std::size_t GradCheckReport::num_params_passing() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [this](const GradCheckEntry& e) {
        return e.frozen ? e.frozen_grad_zero : e.max_rel_error <= tolerance;
      }));
}

namespace {

double eval_loss(const LossBuilder& loss) {
  Tape tape;
  const double v = loss(tape).scalar();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, ParamRegistry& params, double tolerance,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = tolerance;

  params.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    if (!std::isfinite(l.scalar())) throw NumericError("grad_check: non-finite loss");
    tape.backward(l);
  }

  for (auto& [name, p] : params.items()) {
    GradCheckEntry entry;
    entry.name = name;
    if (!p.trainable) {
      entry.frozen = true;
      entry.frozen_grad_zero =
          std::all_of(p.grad.values().begin(), p.grad.values().end(),
                      [](double g) { return g == 0.0; });
      report.entries.push_back(entry);
      continue;
    }
    const std::size_t n = p.value.size();
    const std::size_t limit =
        options.max_entries_per_param == 0 ? n : std::min(n, options.max_entries_per_param);
    // Spread the checked entries evenly when limited.
    const std::size_t stride = std::max<std::size_t>(1, n / limit);
    for (std::size_t i = 0; i < n && entry.checked < limit; i += stride) {
      const double original = p.value[i];
      p.value[i] = original + options.step;
      const double up = eval_loss(loss);
      p.value[i] = original - options.step;
      const double down = eval_loss(loss);
      p.value[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace tips
