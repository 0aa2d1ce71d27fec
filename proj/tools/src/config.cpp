#include "tips_cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>

#include "tips/errors.hpp"

namespace tips::cli {

LogFormat DataConfig::format() const {
  LogFormat f;
  f.delimiter = LogFormat::parse_delimiter(delimiter);
  f.columns = LogFormat::parse_columns(columns);
  f.header = header;
  return f;
}

namespace {

struct Entry {
  std::string key;
  bool train;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::vector<std::string>&)> set;
};

const std::string& single(const std::string& key, const std::vector<std::string>& values) {
  if (values.size() != 1) {
    throw ConfigError(fmt::format("{}: expected one value, got {}", key, values.size()));
  }
  return values.front();
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, text));
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{}: '{}' is not true or false", key, text));
}

template <class T, class Ref>
Entry number(std::string key, bool train, Ref ref) {
  return Entry{key, train, [ref](const RunConfig& c) { return fmt::format("{}", ref(c)); },
               [ref, key](RunConfig& c, const std::vector<std::string>& v) {
                 ref(c) = parse_number<T>(key, single(key, v));
               }};
}

template <class Ref>
Entry boolean(std::string key, bool train, Ref ref) {
  return Entry{key, train, [ref](const RunConfig& c) { return ref(c) ? "true" : "false"; },
               [ref, key](RunConfig& c, const std::vector<std::string>& v) {
                 ref(c) = parse_bool(key, single(key, v));
               }};
}

template <class Ref>
Entry text(std::string key, bool train, Ref ref) {
  return Entry{key, train, [ref](const RunConfig& c) { return fmt::format("\"{}\"", ref(c)); },
               [ref, key](RunConfig& c, const std::vector<std::string>& v) {
                 ref(c) = single(key, v);
               }};
}

#define REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(number<std::uint64_t>("seed", true, REF(seed)));
    t.push_back(text("output_dir", false, REF(output_dir)));

    t.push_back(text("data.path", true, REF(data.path)));
    t.push_back(text("data.delimiter", true, REF(data.delimiter)));
    t.push_back(text("data.columns", true, REF(data.columns)));
    t.push_back(boolean("data.header", true, REF(data.header)));
    t.push_back(text("data.oracle_dir", false, REF(data.oracle_dir)));

    t.push_back(number<std::size_t>("model.dim", true, REF(model.dim)));
    t.push_back(number<std::size_t>("model.heads", true, REF(model.heads)));
    t.push_back(number<std::size_t>("model.max_len", true, REF(model.max_len)));
    t.push_back(boolean("model.query_self_attention", true, REF(model.query_self_attention)));
    t.push_back(text("model.backbone", true, REF(backbone)));
    t.push_back(boolean("model.symmetric_init", true, REF(train.symmetric_init)));

    t.push_back(number<std::size_t>("counterfactual.top_k", true, REF(counterfactual.top_k)));
    t.push_back(number<std::int64_t>("counterfactual.window_seconds", true,
                                     REF(counterfactual.window_seconds)));
    t.push_back(number<double>("counterfactual.delta_bound", true, REF(counterfactual.delta_bound)));
    t.push_back(number<std::size_t>("counterfactual.negative_ratio", true,
                                    REF(counterfactual.negative_ratio)));
    t.push_back(number<std::size_t>("counterfactual.max_retries", true,
                                    REF(counterfactual.max_retries)));

    t.push_back(Entry{"objective.mode", true,
                      [](const RunConfig& c) { return fmt::format("\"{}\"", to_string(c.objective.mode)); },
                      [](RunConfig& c, const std::vector<std::string>& v) {
                        c.objective.mode = parse_mode(single("objective.mode", v));
                      }});
    t.push_back(number<double>("objective.mu", true, REF(objective.mu)));
    t.push_back(number<double>("objective.gamma", true, REF(objective.gamma)));
    t.push_back(number<double>("objective.epsilon", true, REF(objective.epsilon)));
    t.push_back(number<double>("objective.ips_smoothing", true, REF(objective.ips_smoothing)));

    t.push_back(number<std::size_t>("train.epochs", true, REF(train.epochs)));
    t.push_back(number<std::size_t>("train.batch_size", true, REF(train.batch_size)));
    t.push_back(number<double>("train.lr", true, REF(train.lr)));
    t.push_back(Entry{"train.optimizer", true,
                      [](const RunConfig& c) {
                        return std::string(c.train.optimizer == OptimizerKind::kAdam ? "\"adam\""
                                                                                     : "\"sgd\"");
                      },
                      [](RunConfig& c, const std::vector<std::string>& v) {
                        const std::string& s = single("train.optimizer", v);
                        if (s == "adam") {
                          c.train.optimizer = OptimizerKind::kAdam;
                        } else if (s == "sgd") {
                          c.train.optimizer = OptimizerKind::kSgd;
                        } else {
                          throw ConfigError(fmt::format("train.optimizer: '{}' (adam or sgd)", s));
                        }
                      }});
    t.push_back(number<std::size_t>("train.ep_pretrain_epochs", true, REF(train.ep_pretrain_epochs)));
    t.push_back(number<std::size_t>("train.positions_per_user", true, REF(train.positions_per_user)));
    t.push_back(number<std::size_t>("train.random_negatives", true, REF(train.random_negatives)));
    t.push_back(number<std::size_t>("train.val_users", true, REF(train.val_users)));

    t.push_back(Entry{"eval.cutoffs", false,
                      [](const RunConfig& c) {
                        return fmt::format("[{}]", fmt::join(c.eval.protocol.cutoffs, ", "));
                      },
                      [](RunConfig& c, const std::vector<std::string>& v) {
                        std::vector<std::size_t> out;
                        for (const auto& s : v) {
                          // Accept both a TOML array and "5,10".
                          std::stringstream ss(s);
                          std::string part;
                          while (std::getline(ss, part, ',')) {
                            part.erase(0, part.find_first_not_of(" []"));
                            part.erase(part.find_last_not_of(" []") + 1);
                            if (!part.empty()) out.push_back(parse_number<std::size_t>("eval.cutoffs", part));
                          }
                        }
                        c.eval.protocol.cutoffs = out;
                      }});
    t.push_back(number<std::size_t>("eval.negatives", false, REF(eval.protocol.negatives)));
    t.push_back(number<std::uint64_t>("eval.seed", false, REF(eval.protocol.seed)));
    t.push_back(number<std::size_t>("eval.max_users", false, REF(eval.protocol.max_users)));
    t.push_back(text("eval.testset", false, REF(eval.testset)));
    t.push_back(number<std::size_t>("eval.positives_per_user", false, REF(eval.positives_per_user)));
    t.push_back(number<std::size_t>("eval.analyze_users", false, REF(eval.analyze_users)));
    t.push_back(number<std::size_t>("eval.histogram_bins", false, REF(eval.histogram_bins)));

    t.push_back(number<std::size_t>("simulator.n_users", false, REF(simulator.n_users)));
    t.push_back(number<std::size_t>("simulator.n_items", false, REF(simulator.n_items)));
    t.push_back(number<std::size_t>("simulator.latent_dim", false, REF(simulator.latent_dim)));
    t.push_back(number<std::size_t>("simulator.horizon", false, REF(simulator.horizon)));
    t.push_back(number<std::size_t>("simulator.slate_size", false, REF(simulator.slate_size)));
    t.push_back(Entry{"simulator.policy", false,
                      [](const RunConfig& c) { return fmt::format("\"{}\"", to_string(c.simulator.policy)); },
                      [](RunConfig& c, const std::vector<std::string>& v) {
                        c.simulator.policy = parse_policy(single("simulator.policy", v));
                      }});
    t.push_back(number<double>("simulator.beta", false, REF(simulator.beta)));
    t.push_back(number<double>("simulator.recency_scale", false, REF(simulator.recency_scale)));
    t.push_back(number<double>("simulator.drift_amplitude", false, REF(simulator.drift_amplitude)));
    t.push_back(number<double>("simulator.drift_period", false, REF(simulator.drift_period)));
    t.push_back(number<double>("simulator.similarity_boost", false, REF(simulator.similarity_boost)));
    t.push_back(number<double>("simulator.affinity_scale", false, REF(simulator.affinity_scale)));
    t.push_back(number<double>("simulator.click_bias", false, REF(simulator.click_bias)));
    t.push_back(boolean("simulator.exclude_clicked", false, REF(simulator.exclude_clicked)));
    t.push_back(number<std::int64_t>("simulator.start_time", false, REF(simulator.start_time)));
    t.push_back(number<std::int64_t>("simulator.seconds_per_step", false,
                                     REF(simulator.seconds_per_step)));
    return t;
  }();
  return table;
}

#undef REF

const Entry& find_entry(const std::string& key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError(fmt::format("unknown configuration key '{}'", key));
}

std::string render(const RunConfig& config, bool train_only) {
  std::string out;
  std::string section;
  for (const Entry& e : entries()) {
    if (train_only && !e.train) continue;
    const auto dot = e.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
    if (sec != section) {
      out += fmt::format("\n[{}]\n", sec);
      section = sec;
    }
    out += fmt::format("{} = {}\n", name, e.get(config));
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  objective.validate();
  if (train.epochs == 0) throw ConfigError("train.epochs must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (model.dim == 0 || model.max_len == 0) throw ConfigError("model dims must be positive");
  if (counterfactual.top_k == 0) throw ConfigError("counterfactual.top_k must be positive");
  if (counterfactual.window_seconds <= 0) {
    throw ConfigError("counterfactual.window_seconds must be positive");
  }
  if (!(counterfactual.delta_bound >= 0.0)) {
    throw ConfigError("counterfactual.delta_bound must be nonnegative");
  }
  if (counterfactual.negative_ratio == 0) {
    throw ConfigError("counterfactual.negative_ratio must be positive");
  }
  if (eval.protocol.cutoffs.empty()) throw ConfigError("eval.cutoffs must not be empty");
  for (std::size_t k : eval.protocol.cutoffs) {
    if (k == 0) throw ConfigError("eval.cutoffs must be positive");
  }
  if (eval.testset != "loo" && eval.testset != "unbiased") {
    throw ConfigError(fmt::format("eval.testset '{}' (loo or unbiased)", eval.testset));
  }
  if (eval.positives_per_user == 0) throw ConfigError("eval.positives_per_user must be positive");
  if (eval.histogram_bins == 0) throw ConfigError("eval.histogram_bins must be positive");
  if (backbone == "diffusion" || backbone == "cvae") {
    throw ConfigError(fmt::format("model.backbone '{}' is not provided by this build", backbone));
  }
  if (backbone != "attention" && backbone != "mean") {
    throw ConfigError(fmt::format("model.backbone '{}' (attention or mean)", backbone));
  }
  (void)data.format();
  simulator.validate();
}

void set_value(RunConfig& config, const std::string& key, const std::vector<std::string>& values) {
  find_entry(key).set(config, values);
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(fmt::format("{}: {}", source, e.what()));
  }
  RunConfig config;
  for (const auto& item : items) {
    // Section open/close markers.
    if (item.name == "++" || item.name == "--") continue;
    std::string key;
    for (const auto& p : item.parents) key += p + ".";
    key += item.name;
    try {
      set_value(config, key, item.inputs);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", source, e.what()));
    }
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  return parse_config(in, path);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
  }
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\""));
    s.erase(s.find_last_not_of(" \t\"") + 1);
    return s;
  };
  set_value(config, trim(assignment.substr(0, eq)), {trim(assignment.substr(eq + 1))});
}

std::string canonical_config(const RunConfig& config) { return render(config, false); }
std::string canonical_train_config(const RunConfig& config) { return render(config, true); }

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string config_hash(const RunConfig& config) { return sha256_hex(canonical_config(config)); }
std::string train_hash(const RunConfig& config) {
  return sha256_hex(canonical_train_config(config));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Entry& e : entries()) out.push_back(e.key);
  return out;
}

}  // namespace tips::cli
