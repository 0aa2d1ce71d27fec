#pragma once

#include <span>
#include <vector>

#include "tips/interaction_log.hpp"

namespace tips {

/// Leave-one-out partition of one user's chronological sequence.
struct UserSplit {
  UserIndex user = 0;
  std::vector<Event> train;  // full chronological prefix
  Event validation;
  Event test;
  /// First train position kept after truncating to the most recent max_len.
  std::size_t window_start = 0;

  std::span<const Event> train_window() const {
    return std::span<const Event>(train).subspan(window_start);
  }
};

struct SplitSpec {
  std::size_t max_len = 0;
  std::vector<UserSplit> users;
  std::size_t dropped_users = 0;
};

/// Last event is the test item, second-to-last the validation item, the rest
/// train. Users with fewer than 3 events are dropped and counted.
SplitSpec make_splits(const InteractionLog& log, std::size_t max_len);

/// Normalizes inter-event gaps: log(1 + seconds), then min-max scaled with
/// statistics fitted on training gaps.
class GapNormalizer {
 public:
  GapNormalizer() = default;
  GapNormalizer(double log_min, double log_max, double slack = 0.5)
      : lo_(log_min), hi_(log_max), slack_(slack) {}

  /// Fits on the consecutive gaps of every train window.
  static GapNormalizer fit(const SplitSpec& splits, double slack = 0.5);

  /// Scaled value of one gap, clamped to [0, 1 + slack]. Negative gaps are
  /// data corruption (DataError).
  double transform(Timestamp gap_seconds) const;

  /// Gaps of a sorted timestamp sequence; the first entry is always 0.
  std::vector<double> normalize(std::span<const Timestamp> timestamps) const;

  double log_min() const noexcept { return lo_; }
  double log_max() const noexcept { return hi_; }
  double slack() const noexcept { return slack_; }

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  double slack_ = 0.5;
};

}  // namespace tips
