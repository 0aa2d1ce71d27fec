#include "tips/interaction_log.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tips/errors.hpp"

namespace tips {

std::vector<Column> LogFormat::parse_columns(const std::string& spec) {
  std::vector<Column> cols;
  std::size_t start = 0;
  bool has_user = false, has_item = false, has_time = false;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', start), spec.size());
    const std::string name = spec.substr(start, end - start);
    if (name == "user") {
      cols.push_back(Column::kUser);
      has_user = true;
    } else if (name == "item") {
      cols.push_back(Column::kItem);
      has_item = true;
    } else if (name == "rating") {
      cols.push_back(Column::kRating);
    } else if (name == "timestamp") {
      cols.push_back(Column::kTimestamp);
      has_time = true;
    } else if (name == "-") {
      cols.push_back(Column::kIgnore);
    } else {
      throw ConfigError(fmt::format("unknown column '{}' in layout '{}'", name, spec));
    }
    start = end + 1;
  }
  if (!has_user || !has_item || !has_time) {
    throw ConfigError(fmt::format("column layout '{}' needs user, item and timestamp", spec));
  }
  return cols;
}

std::string LogFormat::parse_delimiter(const std::string& spec) {
  if (spec == "::" || spec == ",") return spec;
  if (spec == "tab" || spec == "\\t" || spec == "\t") return "\t";
  throw ConfigError(fmt::format("unsupported delimiter '{}' (use ::, tab or ,)", spec));
}

namespace {

std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<RawInteraction> parse_records(std::istream& in, const LogFormat& format) {
  std::vector<RawInteraction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (format.header && line_no == 1) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view, format.delimiter);
    if (fields.size() != format.columns.size()) {
      throw FormatError(fmt::format("expected {} fields, found {}", format.columns.size(),
                                    fields.size()),
                        line_no);
    }
    RawInteraction rec;
    rec.line = line_no;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string_view f = trim(fields[c]);
      switch (format.columns[c]) {
        case Column::kUser:
          if (f.empty()) throw FormatError("empty user id", line_no);
          rec.user = std::string(f);
          break;
        case Column::kItem:
          if (f.empty()) throw FormatError("empty item id", line_no);
          rec.item = std::string(f);
          break;
        case Column::kTimestamp: {
          Timestamp ts = 0;
          const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
          if (ec != std::errc() || ptr != f.data() + f.size()) {
            throw FormatError(fmt::format("timestamp '{}' is not numeric", f), line_no);
          }
          if (ts < 0) throw FormatError(fmt::format("negative timestamp {}", ts), line_no);
          rec.timestamp = ts;
          break;
        }
        case Column::kRating:
        case Column::kIgnore:
          break;
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

InteractionLog InteractionLog::build(const std::vector<RawInteraction>& records) {
  InteractionLog log;
  std::set<std::tuple<std::size_t, std::size_t, Timestamp>> seen;
  for (const RawInteraction& rec : records) {
    auto [uit, new_user] = log.user_index_.try_emplace(rec.user, log.user_names_.size());
    if (new_user) log.user_names_.push_back(rec.user);
    auto [iit, new_item] = log.item_index_.try_emplace(rec.item, log.item_names_.size());
    if (new_item) log.item_names_.push_back(rec.item);
    const Interaction x{uit->second, iit->second, rec.timestamp};
    if (!seen.emplace(x.user, x.item, x.timestamp).second) {
      ++log.duplicates_removed_;
      continue;
    }
    log.interactions_.push_back(x);
  }
  if (log.duplicates_removed_ > 0) {
    spdlog::warn("removed {} duplicate (user, item, timestamp) rows", log.duplicates_removed_);
  }

  log.sequences_.assign(log.user_names_.size(), {});
  for (const Interaction& x : log.interactions_) {
    log.sequences_[x.user].push_back(Event{x.item, x.timestamp});
  }
  for (auto& seq : log.sequences_) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  }
  if (!log.interactions_.empty()) {
    const auto [lo, hi] = std::minmax_element(
        log.interactions_.begin(), log.interactions_.end(),
        [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    log.t_min_ = lo->timestamp;
    log.t_max_ = hi->timestamp;
  }
  return log;
}

bool InteractionLog::find_user(const std::string& raw, UserIndex& out) const {
  auto it = user_index_.find(raw);
  if (it == user_index_.end()) return false;
  out = it->second;
  return true;
}

bool InteractionLog::find_item(const std::string& raw, ItemIndex& out) const {
  auto it = item_index_.find(raw);
  if (it == item_index_.end()) return false;
  out = it->second;
  return true;
}

InteractionLog parse_log(std::istream& in, const LogFormat& format) {
  return InteractionLog::build(parse_records(in, format));
}

InteractionLog load_log(const std::filesystem::path& path, const LogFormat& format) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open interaction log '{}'", path.string()));
  return parse_log(in, format);
}

void write_log(std::ostream& out, const InteractionLog& log, const LogFormat& format) {
  for (const Interaction& x : log.interactions()) {
    for (std::size_t c = 0; c < format.columns.size(); ++c) {
      if (c > 0) out << format.delimiter;
      switch (format.columns[c]) {
        case Column::kUser: out << log.user_name(x.user); break;
        case Column::kItem: out << log.item_name(x.item); break;
        case Column::kRating: out << '1'; break;
        case Column::kTimestamp: out << x.timestamp; break;
        case Column::kIgnore: break;
      }
    }
    out << '\n';
  }
}

DatasetStats dataset_stats(const InteractionLog& log) {
  DatasetStats s;
  s.n_users = log.n_users();
  s.n_items = log.n_items();
  s.n_interactions = log.size();
  s.first_timestamp = log.min_timestamp();
  s.last_timestamp = log.max_timestamp();
  constexpr double kSecondsPerMonth = 86400.0 * 365.25 / 12.0;
  s.span_months = static_cast<double>(s.last_timestamp - s.first_timestamp) / kSecondsPerMonth;
  return s;
}

}  // namespace tips
