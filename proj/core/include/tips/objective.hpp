#pragma once

#include <span>
#include <string>
#include <vector>

#include "tips/popularity.hpp"
#include "tips/tape.hpp"

namespace tips {

/// Training variants. kStaticIps is the classic popularity-IPS baseline
/// without exposure estimation or time; kNone is the plain backbone.
enum class Mode { kTips, kNoTime, kNoIps, kStaticIps, kNone };

std::string to_string(Mode mode);
/// "tips", "tips-no-time", "tips-no-ips", "tips-no-ep-time", "none".
Mode parse_mode(const std::string& name);

/// What each mode switches on.
struct ModeTraits {
  bool exposure_model = false;  // f_phi runs and feeds the backbone
  bool use_time = false;        // time embeddings and the decay term
  bool model_propensity = false;  // IPS weights come from f_phi
  bool static_propensity = false;
  bool counterfactual_negatives = false;  // otherwise uniform random negatives
  bool exposure_loss = false;

  static ModeTraits of(Mode mode);
};

struct ObjectiveConfig {
  Mode mode = Mode::kTips;
  double mu = 0.5;
  double gamma = 0.3;
  double epsilon = 0.05;
  double ips_smoothing = 1.0;  // additive count smoothing of the static estimate

  void validate() const;
};

/// exp(-mu * gap) / max(s, eps), with the gap already normalized.
double tips_weight(double normalized_gap, double propensity, double mu, double epsilon);

/// -(1/N) sum_i w_i sum_j log sigmoid(d_ij) / sum_i s_i, N = number of
/// positives. diffs[i] is the 1 x J row of y_i - y_ij; weights and
/// propensities are constants (no gradient). Throws PreconditionError when
/// the batch is empty.
Var bpr_tips_loss(Tape& tape, std::span<const Var> diffs, std::span<const double> weights,
                  std::span<const double> propensities);

/// Binary exposure loss from raw (pre-logistic) scores:
/// -(1/|E|) [sum_+ log s + sum_- log(1 - s)], s = logistic(raw).
Var exposure_loss(Tape& tape, std::span<const Var> positive_raw, std::span<const Var> negative_raw);
/// Same loss evaluated on probabilities.
double exposure_loss(std::span<const double> positive_s, std::span<const double> negative_s);

/// Smoothed global exposure-frequency estimate
/// pi(v) = (count(v) + alpha) / sum_u (count(u) + alpha).
class StaticPropensity {
 public:
  StaticPropensity() = default;
  StaticPropensity(const PopularityIndex& index, double alpha);
  StaticPropensity(std::span<const std::size_t> counts, double alpha);

  double propensity(ItemIndex item) const { return pi_.at(item); }
  double weight(ItemIndex item) const { return 1.0 / pi_.at(item); }
  const std::vector<double>& values() const noexcept { return pi_; }

 private:
  std::vector<double> pi_;
};

}  // namespace tips
