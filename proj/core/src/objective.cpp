#include "tips/objective.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kTips: return "tips";
    case Mode::kNoTime: return "tips-no-time";
    case Mode::kNoIps: return "tips-no-ips";
    case Mode::kStaticIps: return "tips-no-ep-time";
    case Mode::kNone: return "none";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kTips, Mode::kNoTime, Mode::kNoIps, Mode::kStaticIps, Mode::kNone}) {
    if (to_string(m) == name) return m;
  }
  if (name == "static-ips") return Mode::kStaticIps;
  throw ConfigError(fmt::format(
      "unknown mode '{}' (tips, tips-no-time, tips-no-ips, tips-no-ep-time, none)", name));
}

ModeTraits ModeTraits::of(Mode mode) {
  ModeTraits t;
  switch (mode) {
    case Mode::kTips:
      t = {true, true, true, false, true, true};
      break;
    case Mode::kNoTime:
      t = {true, false, true, false, true, true};
      break;
    case Mode::kNoIps:
      t = {true, true, false, false, true, true};
      break;
    case Mode::kStaticIps:
      t = {false, false, false, true, true, false};
      break;
    case Mode::kNone:
      t = {false, false, false, false, false, false};
      break;
  }
  return t;
}

void ObjectiveConfig::validate() const {
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  if (!(ips_smoothing > 0.0)) throw ConfigError("ips_smoothing must be positive");
}

double tips_weight(double normalized_gap, double propensity, double mu, double epsilon) {
  return std::exp(-mu * normalized_gap) / std::max(propensity, epsilon);
}

Var bpr_tips_loss(Tape& tape, std::span<const Var> diffs, std::span<const double> weights,
                  std::span<const double> propensities) {
  if (diffs.empty()) throw PreconditionError("empty recommendation batch");
  if (weights.size() != diffs.size() || propensities.size() != diffs.size()) {
    throw DimensionError("bpr_tips_loss: diffs, weights and propensities differ in length");
  }
  double mass = 0.0;
  for (double s : propensities) mass += s;
  if (!(mass > 0.0)) throw NumericError("propensity mass is not positive");
  const double n = static_cast<double>(diffs.size());
  Var total = tape.constant(Tensor2(1, 1));
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    Var term = ad::sum(ad::log_sigmoid(diffs[i]));
    total = ad::add(total, ad::scale(term, -weights[i] / (n * mass)));
  }
  return total;
}

Var exposure_loss(Tape& tape, std::span<const Var> positive_raw, std::span<const Var> negative_raw) {
  if (positive_raw.empty() || negative_raw.empty()) {
    throw PreconditionError("exposure loss needs both positive and negative pairs");
  }
  const double count = static_cast<double>(positive_raw.size() + negative_raw.size());
  Var total = tape.constant(Tensor2(1, 1));
  for (Var r : positive_raw) total = ad::add(total, ad::log_sigmoid(r));
  for (Var r : negative_raw) total = ad::add(total, ad::log_sigmoid(ad::scale(r, -1.0)));
  return ad::scale(total, -1.0 / count);
}

double exposure_loss(std::span<const double> positive_s, std::span<const double> negative_s) {
  if (positive_s.empty() || negative_s.empty()) {
    throw PreconditionError("exposure loss needs both positive and negative pairs");
  }
  double total = 0.0;
  for (double s : positive_s) total += std::log(s);
  for (double s : negative_s) total += std::log1p(-s);
  return -total / static_cast<double>(positive_s.size() + negative_s.size());
}

StaticPropensity::StaticPropensity(const PopularityIndex& index, double alpha) {
  std::vector<std::size_t> counts(index.n_items());
  for (ItemIndex v = 0; v < counts.size(); ++v) counts[v] = index.global_count(v);
  *this = StaticPropensity(counts, alpha);
}

StaticPropensity::StaticPropensity(std::span<const std::size_t> counts, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("static propensity smoothing must be positive");
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c) + alpha;
  pi_.reserve(counts.size());
  for (std::size_t c : counts) pi_.push_back((static_cast<double>(c) + alpha) / total);
}

}  // namespace tips
