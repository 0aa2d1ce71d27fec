#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tips/model.hpp"
#include "tips/objective.hpp"
#include "tips/splits.hpp"

namespace tips {

struct TrainingData;

/// One user to rank: history, held-out positive and the items that must not
/// be drawn as negatives.
struct EvalCase {
  UserIndex user = 0;
  std::vector<Event> history;
  std::optional<ItemIndex> positive;
  Timestamp query_time = 0;
  std::vector<ItemIndex> exclude;  // sorted
};

/// Positive = validation item, history = train window.
std::vector<EvalCase> validation_cases(const TrainingData& data);
/// Positive = test item, history = train + validation, truncated.
std::vector<EvalCase> test_cases(const TrainingData& data);

struct EvalProtocol {
  std::vector<std::size_t> cutoffs{5, 10};
  std::size_t negatives = 99;
  std::uint64_t seed = 2024;
  std::size_t max_users = 0;  // 0 = all
};

/// `count` distinct items outside case.exclude and != positive, drawn with a
/// stream seeded by (seed, user). Fewer when the catalog runs out.
std::vector<ItemIndex> sample_eval_negatives(const EvalCase& c, std::size_t n_items,
                                             std::size_t count, std::uint64_t seed);

/// 1-based rank of candidates[0] under descending score, ties by item index.
std::size_t positive_rank(std::span<const ItemIndex> candidates, std::span<const double> scores);

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> scores(const EvalCase& c,
                                     std::span<const ItemIndex> candidates) const = 0;
  virtual bool has_propensity() const { return false; }
  virtual std::vector<double> propensities(const EvalCase&, std::span<const ItemIndex>) const {
    return {};
  }
};

/// Scores with a trained model; propensities come from the exposure model, or
/// from the static estimate in static-IPS mode.
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const TipsModel& model, const ParamRegistry& params, const GapNormalizer& gaps,
              const StaticPropensity* static_propensity = nullptr);

  std::vector<double> scores(const EvalCase& c,
                             std::span<const ItemIndex> candidates) const override;
  bool has_propensity() const override;
  std::vector<double> propensities(const EvalCase& c,
                                   std::span<const ItemIndex> candidates) const override;

 private:
  const TipsModel& model_;
  mutable ParamRegistry params_;
  const GapNormalizer& gaps_;
  const StaticPropensity* static_;
};

struct CutoffMetrics {
  std::size_t k = 0;
  double hr = 0.0;
  double ndcg = 0.0;
};

struct UserResult {
  UserIndex user = 0;
  std::size_t rank = 0;
  std::optional<double> propensity_gap;
};

struct MetricReport {
  std::vector<CutoffMetrics> metrics;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::uint64_t seed = 0;
  std::size_t negatives = 0;
  std::optional<double> mean_propensity_gap;
  std::vector<UserResult> users;
  std::string config_hash;
  std::string label;

  double hr(std::size_t k) const;
  double ndcg(std::size_t k) const;
  /// Deterministic JSON rendering.
  std::string to_json(bool include_users = true) const;
};

MetricReport evaluate(const Scorer& scorer, std::span<const EvalCase> cases, std::size_t n_items,
                      const EvalProtocol& protocol, bool with_propensity = false);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};
Histogram histogram(std::span<const double> values, std::size_t bins);
Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

}  // namespace tips
