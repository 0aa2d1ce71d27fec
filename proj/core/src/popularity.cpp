#include "tips/popularity.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

#include "tips/errors.hpp"

namespace tips {

PopularityIndex::PopularityIndex(std::size_t n_items, std::span<const Interaction> events)
    : times_(n_items) {
  for (const Interaction& x : events) {
    if (x.item >= n_items) throw IndexError("popularity event item out of range");
    times_[x.item].push_back(x.timestamp);
  }
  for (auto& t : times_) std::sort(t.begin(), t.end());
  total_ = events.size();
}

PopularityIndex PopularityIndex::from_sequences(std::size_t n_items,
                                                std::span<const std::vector<Event>> sequences) {
  std::vector<Interaction> events;
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    for (const Event& e : sequences[u]) events.push_back(Interaction{u, e.item, e.timestamp});
  }
  return PopularityIndex(n_items, events);
}

std::size_t PopularityIndex::count(ItemIndex item, Timestamp t, Timestamp window) const {
  if (window <= 0) throw ConfigError("popularity window must be positive");
  if (item >= times_.size()) return 0;
  const auto& ts = times_[item];
  const auto lo = std::lower_bound(ts.begin(), ts.end(), t - window);
  const auto hi = std::upper_bound(ts.begin(), ts.end(), t);
  return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

std::size_t PopularityIndex::global_count(ItemIndex item) const {
  return item < times_.size() ? times_[item].size() : 0;
}

namespace {

std::vector<ItemIndex> rank_by_count(const std::vector<std::size_t>& counts, std::size_t k) {
  std::vector<ItemIndex> items;
  for (ItemIndex v = 0; v < counts.size(); ++v) {
    if (counts[v] > 0) items.push_back(v);
  }
  const std::size_t keep = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep), items.end(),
                    [&](ItemIndex a, ItemIndex b) {
                      return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
                    });
  items.resize(keep);
  return items;
}

}  // namespace

std::vector<ItemIndex> PopularityIndex::top_k(Timestamp t, Timestamp window, std::size_t k) const {
  std::vector<std::size_t> counts(times_.size());
  for (ItemIndex v = 0; v < times_.size(); ++v) counts[v] = count(v, t, window);
  return rank_by_count(counts, k);
}

std::vector<ItemIndex> PopularityIndex::top_k_global(std::size_t k) const {
  std::vector<std::size_t> counts(times_.size());
  for (ItemIndex v = 0; v < times_.size(); ++v) counts[v] = times_[v].size();
  return rank_by_count(counts, k);
}

std::vector<std::vector<ItemIndex>> PopularityIndex::top_k_many(std::span<const Timestamp> times,
                                                                Timestamp window,
                                                                std::size_t k) const {
  if (window <= 0) throw ConfigError("popularity window must be positive");
  std::vector<std::pair<Timestamp, ItemIndex>> events;
  events.reserve(total_);
  for (ItemIndex v = 0; v < times_.size(); ++v) {
    for (Timestamp t : times_[v]) events.emplace_back(t, v);
  }
  std::sort(events.begin(), events.end());

  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  // Ranked set keyed by (-count, item) holds every item with a nonzero count.
  std::vector<std::size_t> counts(times_.size(), 0);
  std::set<std::pair<long long, ItemIndex>> ranked;
  auto bump = [&](ItemIndex v, int delta) {
    if (counts[v] > 0) ranked.erase({-static_cast<long long>(counts[v]), v});
    counts[v] = static_cast<std::size_t>(static_cast<long long>(counts[v]) + delta);
    if (counts[v] > 0) ranked.insert({-static_cast<long long>(counts[v]), v});
  };

  std::vector<std::vector<ItemIndex>> out(times.size());
  std::size_t added = 0, removed = 0;
  for (std::size_t qi : order) {
    const Timestamp t = times[qi];
    while (added < events.size() && events[added].first <= t) bump(events[added++].second, +1);
    while (removed < added && events[removed].first < t - window) {
      bump(events[removed++].second, -1);
    }
    auto& res = out[qi];
    for (auto it = ranked.begin(); it != ranked.end() && res.size() < k; ++it) {
      res.push_back(it->second);
    }
  }
  return out;
}

}  // namespace tips
