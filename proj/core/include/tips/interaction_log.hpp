#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace tips {

using UserIndex = std::size_t;
using ItemIndex = std::size_t;
using Timestamp = std::int64_t;  // seconds since epoch

struct Interaction {
  UserIndex user = 0;
  ItemIndex item = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// One entry of a user's chronological sequence.
struct Event {
  ItemIndex item = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

enum class Column { kUser, kItem, kRating, kTimestamp, kIgnore };

struct LogFormat {
  std::string delimiter = "::";
  std::vector<Column> columns{Column::kUser, Column::kItem, Column::kRating, Column::kTimestamp};
  bool header = false;

  /// Parses "user,item,rating,timestamp" style layouts; "-" skips a column.
  static std::vector<Column> parse_columns(const std::string& spec);
  /// Accepts "::", "tab" / "\t", ",".
  static std::string parse_delimiter(const std::string& spec);
};

/// A raw record before vocabulary mapping. `line` is 1-based, for diagnostics.
struct RawInteraction {
  std::string user;
  std::string item;
  Timestamp timestamp = 0;
  std::size_t line = 0;
};

// Deduplicated interactions plus vocabularies and per-user chronological
// sequences. Immutable after construction.
class InteractionLog {
 public:
  InteractionLog() = default;

  /// Builds vocabularies in order of first appearance, removes duplicate
  /// (user, item, timestamp) rows, and sorts each user's sequence by time with
  /// ties kept in input order.
  static InteractionLog build(const std::vector<RawInteraction>& records);

  std::size_t n_users() const noexcept { return user_names_.size(); }
  std::size_t n_items() const noexcept { return item_names_.size(); }
  std::size_t size() const noexcept { return interactions_.size(); }
  std::size_t duplicates_removed() const noexcept { return duplicates_removed_; }

  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
  const std::vector<Event>& sequence(UserIndex u) const { return sequences_.at(u); }
  const std::vector<std::vector<Event>>& sequences() const noexcept { return sequences_; }

  const std::string& user_name(UserIndex u) const { return user_names_.at(u); }
  const std::string& item_name(ItemIndex v) const { return item_names_.at(v); }
  /// Vocabulary lookups; return false when the raw id is unknown.
  bool find_user(const std::string& raw, UserIndex& out) const;
  bool find_item(const std::string& raw, ItemIndex& out) const;

  Timestamp min_timestamp() const noexcept { return t_min_; }
  Timestamp max_timestamp() const noexcept { return t_max_; }

  friend bool operator==(const InteractionLog& a, const InteractionLog& b) {
    return a.interactions_ == b.interactions_ && a.user_names_ == b.user_names_ &&
           a.item_names_ == b.item_names_ && a.sequences_ == b.sequences_;
  }

 private:
  std::vector<Interaction> interactions_;
  std::vector<std::string> user_names_;
  std::vector<std::string> item_names_;
  std::unordered_map<std::string, UserIndex> user_index_;
  std::unordered_map<std::string, ItemIndex> item_index_;
  std::vector<std::vector<Event>> sequences_;
  std::size_t duplicates_removed_ = 0;
  Timestamp t_min_ = 0;
  Timestamp t_max_ = 0;
};

std::vector<RawInteraction> parse_records(std::istream& in, const LogFormat& format);
InteractionLog parse_log(std::istream& in, const LogFormat& format);
/// Throws DataError if the file cannot be opened, FormatError on a bad row.
InteractionLog load_log(const std::filesystem::path& path, const LogFormat& format);
/// Writes interactions in log order with raw ids; a rating column is written as 1.
void write_log(std::ostream& out, const InteractionLog& log, const LogFormat& format);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  Timestamp first_timestamp = 0;
  Timestamp last_timestamp = 0;
  double span_months = 0.0;
};

DatasetStats dataset_stats(const InteractionLog& log);

}  // namespace tips
