#pragma once

#include <span>
#include <vector>

#include "tips/interaction_log.hpp"

namespace tips {

// Time-windowed item occurrence counts over a set of training events.
class PopularityIndex {
 public:
  PopularityIndex() = default;
  /// `events` are (item, timestamp) pairs from the training split only.
  PopularityIndex(std::size_t n_items, std::span<const Interaction> events);
  static PopularityIndex from_sequences(std::size_t n_items,
                                        std::span<const std::vector<Event>> sequences);

  std::size_t n_items() const noexcept { return times_.size(); }
  std::size_t total_events() const noexcept { return total_; }

  /// Occurrences of `item` with timestamp in [t - window, t]. Unknown items
  /// count 0. Throws ConfigError when window <= 0.
  std::size_t count(ItemIndex item, Timestamp t, Timestamp window) const;
  std::size_t global_count(ItemIndex item) const;

  /// Items with a nonzero windowed count ranked by (count desc, index asc),
  /// truncated to k.
  std::vector<ItemIndex> top_k(Timestamp t, Timestamp window, std::size_t k) const;
  std::vector<ItemIndex> top_k_global(std::size_t k) const;

  /// top_k for many query times at once using one sliding-window sweep.
  /// Result i corresponds to times[i].
  std::vector<std::vector<ItemIndex>> top_k_many(std::span<const Timestamp> times,
                                                 Timestamp window, std::size_t k) const;

 private:
  std::vector<std::vector<Timestamp>> times_;  // per item, sorted
  std::size_t total_ = 0;
};

}  // namespace tips
