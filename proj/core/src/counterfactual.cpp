#include "tips/counterfactual.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tips/errors.hpp"

namespace tips {

namespace {

ItemIndex uniform_other(ItemIndex item, std::size_t n_items, Rng& rng) {
  if (n_items < 2) throw SamplingError("need at least two items");
  ItemIndex v = uniform_index(rng, n_items - 1);
  return v >= item ? v + 1 : v;
}

ItemIndex best_cosine(const Tensor2& table, const std::vector<double>& norms, ItemIndex item,
                      Rng& rng) {
  const std::size_t n = table.rows();
  if (item >= n) throw IndexError(fmt::format("item {} out of range ({} items)", item, n));
  if (n < 2) throw PreconditionError("similar_item needs at least two items");
  const auto query = table.row(item);
  ItemIndex best = n;
  double best_sim = -2.0;
  if (norms[item] > 0.0) {
    for (ItemIndex j = 0; j < n; ++j) {
      if (j == item || norms[j] == 0.0) continue;
      const double sim = dot(query, table.row(j)) / (norms[item] * norms[j]);
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
  }
  if (best == n) {
    spdlog::warn("no nonzero exposure embedding to compare with item {}; sampling uniformly", item);
    return uniform_other(item, n, rng);
  }
  return best;
}

std::vector<double> row_norms(const Tensor2& table) {
  std::vector<double> norms(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) norms[i] = norm2(table.row(i));
  return norms;
}

}  // namespace

ItemIndex similar_item(const Tensor2& exposure_table, ItemIndex item, Rng& rng) {
  return best_cosine(exposure_table, row_norms(exposure_table), item, rng);
}

std::vector<ItemIndex> similar_items(const Tensor2& exposure_table, Rng& rng) {
  const auto norms = row_norms(exposure_table);
  std::vector<ItemIndex> out(exposure_table.rows());
  for (ItemIndex v = 0; v < out.size(); ++v) out[v] = best_cosine(exposure_table, norms, v, rng);
  return out;
}

std::vector<ItemIndex> popular_support(std::span<const ItemIndex> ranked, ItemIndex item,
                                       std::size_t k) {
  std::vector<ItemIndex> out;
  for (ItemIndex v : ranked) {
    if (out.size() == k) break;
    if (v != item) out.push_back(v);
  }
  return out;
}

std::vector<ItemIndex> popular_support(const PopularityIndex& index, ItemIndex item, Timestamp t,
                                       std::size_t k, Timestamp window) {
  auto support = popular_support(index.top_k(t, window, k + 1), item, k);
  if (support.empty()) {
    spdlog::warn("popularity window at t={} holds no item besides {}; using global counts", t,
                 item);
    support = popular_support(index.top_k_global(k + 1), item, k);
  }
  return support;
}

ItemIndex sample_popular(std::span<const ItemIndex> support, ItemIndex item, std::size_t n_items,
                         Rng& rng) {
  if (support.empty()) return uniform_other(item, n_items, rng);
  return support[uniform_index(rng, support.size())];
}

ItemIndex popular_item(const PopularityIndex& index, ItemIndex item, Timestamp t, std::size_t k,
                       Timestamp window, Rng& rng) {
  const auto support = popular_support(index, item, t, k, window);
  return sample_popular(support, item, index.n_items(), rng);
}

std::vector<double> draw_delta(std::size_t dim, double bound, Rng& rng) {
  std::vector<double> delta(dim);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& x : delta) x = u(rng);
  return delta;
}

std::vector<double> perturb_time(std::span<const double> time_embedding, double bound, Rng& rng) {
  std::vector<double> out(time_embedding.begin(), time_embedding.end());
  const auto delta = draw_delta(out.size(), bound, rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
  return out;
}

ExposureSampleSets build_sample_sets(std::span<const FactualPair> batch, std::size_t n_items,
                                     Timestamp t_min, Timestamp t_max,
                                     const CounterfactualConfig& config, Rng& rng) {
  if (batch.empty()) throw PreconditionError("build_sample_sets on an empty batch");
  if (n_items == 0) throw PreconditionError("empty catalog");
  if (t_max < t_min) throw PreconditionError("inverted time span");
  ExposureSampleSets sets;
  std::set<std::pair<ItemIndex, Timestamp>> taken;
  for (const FactualPair& f : batch) {
    sets.positives.push_back({f.item, f.timestamp, ExposureKind::kFactual, f.anchor, {}});
    sets.positives.push_back({f.triple.similar, f.timestamp, ExposureKind::kSimilar, f.anchor, {}});
    sets.positives.push_back({f.triple.popular, f.timestamp, ExposureKind::kPopular, f.anchor, {}});
    sets.positives.push_back({f.item, f.timestamp, ExposureKind::kJitter, f.anchor, f.triple.delta});
    taken.emplace(f.item, f.timestamp);
    taken.emplace(f.triple.similar, f.timestamp);
    taken.emplace(f.triple.popular, f.timestamp);
  }
  std::uniform_int_distribution<Timestamp> time_dist(t_min, t_max);
  for (const ExposurePair& p : sets.positives) {
    for (std::size_t r = 0; r < config.negative_ratio; ++r) {
      std::size_t attempts = 0;
      while (true) {
        const ItemIndex v = uniform_index(rng, n_items);
        const Timestamp t = time_dist(rng);
        if (taken.count({v, t}) == 0) {
          sets.negatives.push_back({v, t, ExposureKind::kNegative, p.anchor, {}});
          break;
        }
        if (++attempts >= config.max_retries) {
          throw SamplingError(fmt::format(
              "no negative exposure pair found after {} draws ({} items, span [{}, {}])", attempts,
              n_items, t_min, t_max));
        }
      }
    }
  }
  return sets;
}

}  // namespace tips
