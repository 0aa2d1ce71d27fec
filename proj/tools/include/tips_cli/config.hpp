#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tips/counterfactual.hpp"
#include "tips/encoders.hpp"
#include "tips/evaluation.hpp"
#include "tips/interaction_log.hpp"
#include "tips/objective.hpp"
#include "tips/simulator.hpp"
#include "tips/training.hpp"

namespace tips::cli {

struct DataConfig {
  std::string path;
  std::string delimiter = "::";
  std::string columns = "user,item,rating,timestamp";
  bool header = false;
  std::string oracle_dir;  // simulator oracle files, for the unbiased test set

  LogFormat format() const;
};

struct EvalConfig {
  EvalProtocol protocol;
  std::string testset = "loo";  // loo | unbiased
  std::size_t positives_per_user = 1;
  std::size_t analyze_users = 100;
  std::size_t histogram_bins = 20;
};

// Everything a run needs. Defaults are the documented defaults.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "tips_out";
  DataConfig data;
  ModelDims model;
  std::string backbone = "attention";
  CounterfactualConfig counterfactual;
  ObjectiveConfig objective;
  TrainConfig train;
  EvalConfig eval;
  WorldSpec simulator;

  /// Range checks across sections; throws ConfigError.
  void validate() const;
};

/// Applies one "section.key" = value assignment. Unknown keys and
/// unparsable values throw ConfigError.
void set_value(RunConfig& config, const std::string& key, const std::vector<std::string>& values);

/// Reads a key = value file with [section] headers.
RunConfig load_config(const std::string& path);
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");

/// "key=value" overrides, e.g. from the command line.
void apply_override(RunConfig& config, const std::string& assignment);

/// Every key with its current value, grouped by section, in a fixed order.
std::string canonical_config(const RunConfig& config);
/// Only the keys that influence training.
std::string canonical_train_config(const RunConfig& config);

/// Hex SHA-256 of the canonical text.
std::string config_hash(const RunConfig& config);
std::string train_hash(const RunConfig& config);
std::string sha256_hex(const std::string& text);

std::vector<std::string> config_keys();

}  // namespace tips::cli
