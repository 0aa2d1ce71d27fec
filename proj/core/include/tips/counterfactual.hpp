#pragma once

#include <span>
#include <vector>

#include "tips/interaction_log.hpp"
#include "tips/popularity.hpp"
#include "tips/rng.hpp"
#include "tips/tensor.hpp"

namespace tips {

struct CounterfactualConfig {
  std::size_t top_k = 10;
  Timestamp window_seconds = 30 * 86400;
  double delta_bound = 1e-4;
  std::size_t negative_ratio = 1;
  std::size_t max_retries = 100;
};

/// argmax over items other than `item` of cosine similarity between H^(E)
/// rows. Zero-norm candidates are skipped; ties go to the lowest index. When
/// no candidate qualifies a uniformly random other item is returned.
ItemIndex similar_item(const Tensor2& exposure_table, ItemIndex item, Rng& rng);

/// similar_item for every item in one pass (recomputed once per epoch).
std::vector<ItemIndex> similar_items(const Tensor2& exposure_table, Rng& rng);

/// First k entries of a ranked popularity list after removing `item`.
std::vector<ItemIndex> popular_support(std::span<const ItemIndex> ranked, ItemIndex item,
                                       std::size_t k);

/// Windowed Top-K support at time t minus `item`; falls back to the global
/// Top-K (with a warning) when the window holds no other item.
std::vector<ItemIndex> popular_support(const PopularityIndex& index, ItemIndex item, Timestamp t,
                                       std::size_t k, Timestamp window);

/// Uniform draw from the support; an empty support falls back to a uniform
/// item other than `item`.
ItemIndex sample_popular(std::span<const ItemIndex> support, ItemIndex item, std::size_t n_items,
                         Rng& rng);

ItemIndex popular_item(const PopularityIndex& index, ItemIndex item, Timestamp t, std::size_t k,
                       Timestamp window, Rng& rng);

/// Coordinate-wise uniform in [-bound, bound].
std::vector<double> draw_delta(std::size_t dim, double bound, Rng& rng);
std::vector<double> perturb_time(std::span<const double> time_embedding, double bound, Rng& rng);

enum class ExposureKind { kFactual, kSimilar, kPopular, kJitter, kNegative };

/// One item-time pair for the exposure loss. `anchor` indexes the training
/// example whose history the propensity is computed against.
struct ExposurePair {
  ItemIndex item = 0;
  Timestamp timestamp = 0;
  ExposureKind kind = ExposureKind::kFactual;
  std::size_t anchor = 0;
  std::vector<double> delta;  // only for kJitter

  bool exposed() const { return kind != ExposureKind::kNegative; }
  /// Counterfactual pairs are exposed but not clicked.
  bool clicked() const { return kind == ExposureKind::kFactual; }
};

/// The three counterfactual partners of one factual interaction.
struct CounterfactualTriple {
  ItemIndex similar = 0;
  ItemIndex popular = 0;
  std::vector<double> delta;
};

struct FactualPair {
  ItemIndex item = 0;
  Timestamp timestamp = 0;
  CounterfactualTriple triple;
  std::size_t anchor = 0;
};

struct ExposureSampleSets {
  std::vector<ExposurePair> positives;
  std::vector<ExposurePair> negatives;
};

/// Positives: each factual pair and its three counterfactuals. Negatives:
/// negative_ratio per positive, item uniform over the catalog and timestamp
/// uniform over [t_min, t_max], rejected while the (item, timestamp) key is a
/// positive. Throws SamplingError after max_retries consecutive rejections.
ExposureSampleSets build_sample_sets(std::span<const FactualPair> batch, std::size_t n_items,
                                     Timestamp t_min, Timestamp t_max,
                                     const CounterfactualConfig& config, Rng& rng);

}  // namespace tips
