#include "tips/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "json.hpp"
#include "tips/errors.hpp"
#include "tips/training.hpp"

namespace tips {

namespace {

std::vector<ItemIndex> user_items(const UserSplit& s) {
  std::set<ItemIndex> items;
  for (const Event& e : s.train) items.insert(e.item);
  items.insert(s.validation.item);
  items.insert(s.test.item);
  return {items.begin(), items.end()};
}

}  // namespace

std::vector<EvalCase> validation_cases(const TrainingData& data) {
  std::vector<EvalCase> out;
  out.reserve(data.splits.users.size());
  for (const UserSplit& s : data.splits.users) {
    const auto window = s.train_window();
    out.push_back(EvalCase{s.user, {window.begin(), window.end()}, s.validation.item,
                           s.validation.timestamp, user_items(s)});
  }
  return out;
}

std::vector<EvalCase> test_cases(const TrainingData& data) {
  std::vector<EvalCase> out;
  out.reserve(data.splits.users.size());
  for (const UserSplit& s : data.splits.users) {
    std::vector<Event> history = s.train;
    history.push_back(s.validation);
    if (history.size() > data.splits.max_len) {
      history.erase(history.begin(),
                    history.end() - static_cast<std::ptrdiff_t>(data.splits.max_len));
    }
    out.push_back(
        EvalCase{s.user, std::move(history), s.test.item, s.test.timestamp, user_items(s)});
  }
  return out;
}

std::vector<ItemIndex> sample_eval_negatives(const EvalCase& c, std::size_t n_items,
                                             std::size_t count, std::uint64_t seed) {
  std::vector<ItemIndex> pool;
  pool.reserve(n_items);
  for (ItemIndex v = 0; v < n_items; ++v) {
    if (c.positive && v == *c.positive) continue;
    if (std::binary_search(c.exclude.begin(), c.exclude.end(), v)) continue;
    pool.push_back(v);
  }
  Rng rng = make_rng(seed, c.user);
  const std::size_t take = std::min(count, pool.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

std::size_t positive_rank(std::span<const ItemIndex> candidates, std::span<const double> scores) {
  if (candidates.empty() || candidates.size() != scores.size()) {
    throw DimensionError("positive_rank needs one score per candidate");
  }
  std::size_t rank = 1;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (scores[i] > scores[0] || (scores[i] == scores[0] && candidates[i] < candidates[0])) ++rank;
  }
  return rank;
}

ModelScorer::ModelScorer(const TipsModel& model, const ParamRegistry& params,
                         const GapNormalizer& gaps, const StaticPropensity* static_propensity)
    : model_(model), params_(params), gaps_(gaps), static_(static_propensity) {}

namespace {

struct History {
  std::vector<ItemIndex> items;
  std::vector<double> gaps;
  Timestamp last = 0;
};

History resolve(const EvalCase& c, const GapNormalizer& gaps) {
  History h;
  std::vector<Timestamp> times;
  for (const Event& e : c.history) {
    h.items.push_back(e.item);
    times.push_back(e.timestamp);
  }
  h.gaps = gaps.normalize(times);
  h.last = times.back();
  return h;
}

}  // namespace

std::vector<double> ModelScorer::scores(const EvalCase& c,
                                        std::span<const ItemIndex> candidates) const {
  const History h = resolve(c, gaps_);
  Tape tape;
  const auto enc = model_.encode(tape, params_, h.items, h.gaps);
  Var u = model_.user_vector(tape, params_, enc);
  const Tensor2& y = score_candidates(tape, params_, u, candidates).value();
  return {y.values().begin(), y.values().end()};
}

bool ModelScorer::has_propensity() const {
  return model_.traits().exposure_model || (static_ != nullptr && model_.traits().static_propensity);
}

std::vector<double> ModelScorer::propensities(const EvalCase& c,
                                              std::span<const ItemIndex> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  if (!model_.traits().exposure_model) {
    if (static_ == nullptr) throw PreconditionError("mode has no propensity estimate");
    for (ItemIndex v : candidates) out.push_back(static_->propensity(v));
    return out;
  }
  const History h = resolve(c, gaps_);
  const double gap = gaps_.transform(std::llabs(c.query_time - h.last));
  Tape tape;
  const auto enc = model_.encode(tape, params_, h.items, h.gaps);
  for (ItemIndex v : candidates) {
    out.push_back(model_.propensity(tape, params_, enc, v, gap).propensity.scalar());
  }
  return out;
}

double MetricReport::hr(std::size_t k) const {
  for (const auto& m : metrics) {
    if (m.k == k) return m.hr;
  }
  throw IndexError(fmt::format("no metrics at cutoff {}", k));
}

double MetricReport::ndcg(std::size_t k) const {
  for (const auto& m : metrics) {
    if (m.k == k) return m.ndcg;
  }
  throw IndexError(fmt::format("no metrics at cutoff {}", k));
}

std::string MetricReport::to_json(bool include_users) const {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["negatives"] = negatives;
  j["users_evaluated"] = users_evaluated;
  j["users_skipped"] = users_skipped;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& c : metrics) {
    m[fmt::format("HR@{}", c.k)] = c.hr;
    m[fmt::format("NDCG@{}", c.k)] = c.ndcg;
  }
  j["metrics"] = m;
  if (mean_propensity_gap) {
    j["mean_propensity_gap"] = *mean_propensity_gap;
  } else {
    j["mean_propensity_gap"] = nullptr;
  }
  if (include_users) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& u : users) {
      nlohmann::ordered_json e;
      e["user"] = u.user;
      e["rank"] = u.rank;
      if (u.propensity_gap) e["propensity_gap"] = *u.propensity_gap;
      arr.push_back(e);
    }
    j["users"] = arr;
  }
  return j.dump(2) + "\n";
}

MetricReport evaluate(const Scorer& scorer, std::span<const EvalCase> cases, std::size_t n_items,
                      const EvalProtocol& protocol, bool with_propensity) {
  if (protocol.cutoffs.empty()) throw ConfigError("evaluation needs at least one cutoff");
  MetricReport report;
  report.seed = protocol.seed;
  report.negatives = protocol.negatives;
  for (std::size_t k : protocol.cutoffs) {
    if (k == 0) throw ConfigError("cutoffs must be positive");
    report.metrics.push_back({k, 0.0, 0.0});
  }
  const bool gaps = with_propensity && scorer.has_propensity();
  double gap_sum = 0.0;
  for (const EvalCase& c : cases) {
    if (protocol.max_users > 0 && report.users_evaluated >= protocol.max_users) break;
    if (!c.positive || c.history.empty()) {
      ++report.users_skipped;
      continue;
    }
    std::vector<ItemIndex> candidates{*c.positive};
    const auto negs = sample_eval_negatives(c, n_items, protocol.negatives, protocol.seed);
    candidates.insert(candidates.end(), negs.begin(), negs.end());
    const auto scores = scorer.scores(c, candidates);
    UserResult r{c.user, positive_rank(candidates, scores), std::nullopt};
    for (auto& m : report.metrics) {
      if (r.rank <= m.k) {
        m.hr += 1.0;
        m.ndcg += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
      }
    }
    if (gaps && !negs.empty()) {
      const auto s = scorer.propensities(c, candidates);
      double neg_mean = 0.0;
      for (std::size_t i = 1; i < s.size(); ++i) neg_mean += s[i];
      neg_mean /= static_cast<double>(s.size() - 1);
      r.propensity_gap = s[0] - neg_mean;
      gap_sum += *r.propensity_gap;
    }
    report.users.push_back(r);
    ++report.users_evaluated;
  }
  if (report.users_evaluated > 0) {
    const double n = static_cast<double>(report.users_evaluated);
    for (auto& m : report.metrics) {
      m.hr /= n;
      m.ndcg /= n;
    }
    if (gaps) report.mean_propensity_gap = gap_sum / n;
  }
  return report;
}

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
  }
  for (double v : values) {
    const double x = std::max(0.0, (v - lo) / (hi - lo) * static_cast<double>(bins));
    const auto b = static_cast<std::size_t>(x);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) return histogram(values, 0.0, 1.0, bins);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return histogram(values, *lo, *hi, bins);
}

}  // namespace tips
