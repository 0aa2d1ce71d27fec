#include "tips/splits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

SplitSpec make_splits(const InteractionLog& log, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max sequence length must be positive");
  SplitSpec spec;
  spec.max_len = max_len;
  for (UserIndex u = 0; u < log.n_users(); ++u) {
    const auto& seq = log.sequence(u);
    if (seq.size() < 3) {
      ++spec.dropped_users;
      continue;
    }
    UserSplit s;
    s.user = u;
    s.train.assign(seq.begin(), seq.end() - 2);
    s.validation = seq[seq.size() - 2];
    s.test = seq.back();
    s.window_start = s.train.size() > max_len ? s.train.size() - max_len : 0;
    spec.users.push_back(std::move(s));
  }
  return spec;
}

GapNormalizer GapNormalizer::fit(const SplitSpec& splits, double slack) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const UserSplit& s : splits.users) {
    const auto window = s.train_window();
    for (std::size_t i = 1; i < window.size(); ++i) {
      const Timestamp gap = window[i].timestamp - window[i - 1].timestamp;
      if (gap < 0) throw DataError("training sequence is not sorted by time");
      const double v = std::log1p(static_cast<double>(gap));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return GapNormalizer(0.0, 1.0, slack);
  if (hi <= lo) hi = lo + 1.0;
  return GapNormalizer(lo, hi, slack);
}

double GapNormalizer::transform(Timestamp gap_seconds) const {
  if (gap_seconds < 0) {
    throw DataError(fmt::format("negative inter-event gap {} s", gap_seconds));
  }
  const double v = (std::log1p(static_cast<double>(gap_seconds)) - lo_) / (hi_ - lo_);
  return std::clamp(v, 0.0, 1.0 + slack_);
}

std::vector<double> GapNormalizer::normalize(std::span<const Timestamp> timestamps) const {
  std::vector<double> out(timestamps.size(), 0.0);
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    out[i] = transform(timestamps[i] - timestamps[i - 1]);
  }
  return out;
}

}  // namespace tips
