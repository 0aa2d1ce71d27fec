#include "tips_cli/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "tips/errors.hpp"
#include "tips/rng.hpp"
#include "tips_cli/pipeline.hpp"

namespace fs = std::filesystem;

namespace tips::cli {
namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint;
  bool untrained = false;
};

RunConfig resolve(const Options& opt) {
  RunConfig config = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
  for (const auto& o : opt.overrides) apply_override(config, o);
  config.validate();
  return config;
}

fs::path out_dir(const RunConfig& config) { return fs::path(config.output_dir); }

fs::path checkpoint_dir(const RunConfig& config, const Options& opt) {
  return opt.checkpoint.empty() ? out_dir(config) / "checkpoint" : fs::path(opt.checkpoint);
}

// Refuses a checkpoint trained under a different configuration.
ParamRegistry load_matching(const RunConfig& config, const Options& opt) {
  Checkpoint cp = load_checkpoint(checkpoint_dir(config, opt));
  const std::string expected = train_hash(config);
  if (cp.manifest.train_hash != expected) {
    throw ConfigError(fmt::format(
        "checkpoint '{}' was trained with a different configuration (hash {}, config gives {})",
        checkpoint_dir(config, opt).string(), cp.manifest.train_hash, expected));
  }
  return std::move(cp.params);
}

int cmd_print_config(const Options& opt) {
  const RunConfig config = resolve(opt);
  std::cout << fmt::format("# config_hash = {}\n# train_hash = {}\n", config_hash(config),
                           train_hash(config))
            << canonical_config(config);
  return 0;
}

int cmd_ingest(const Options& opt) {
  const RunConfig config = resolve(opt);
  if (config.data.path.empty()) throw ConfigError("data.path is not set");
  const InteractionLog log = load_log(config.data.path, config.data.format());
  const DatasetStats s = dataset_stats(log);
  nlohmann::ordered_json j;
  j["path"] = config.data.path;
  j["users"] = s.n_users;
  j["items"] = s.n_items;
  j["interactions"] = s.n_interactions;
  j["duplicates_removed"] = log.duplicates_removed();
  j["first_timestamp"] = s.first_timestamp;
  j["last_timestamp"] = s.last_timestamp;
  j["span_months"] = s.span_months;
  j["config_hash"] = config_hash(config);
  j["seed"] = config.seed;
  const std::string text = j.dump(2) + "\n";
  write_text(out_dir(config) / "stats.json", text);
  std::cout << text;
  return 0;
}

int cmd_simulate(const Options& opt) {
  const RunConfig config = resolve(opt);
  const OracleBundle bundle = simulate(config.simulator, config.seed);
  const fs::path dir = out_dir(config);
  const fs::path log_path = dir / "ratings.dat";
  const fs::path oracle = dir / "oracle";
  fs::create_directories(oracle);
  write_biased_log(bundle, log_path);
  write_oracle_files(bundle, oracle);

  nlohmann::ordered_json world;
  world["note"] = "evaluation only";
  world["seed"] = config.seed;
  world["config_hash"] = config_hash(config);
  // The [simulator] section of the canonical rendering, so it round-trips
  // through set_value.
  nlohmann::ordered_json sim;
  const std::string text = canonical_config(config);
  bool in_sim = false;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (line.starts_with('[')) {
      in_sim = line == "[simulator]";
      continue;
    }
    if (!in_sim || line.empty()) continue;
    const auto eq = line.find(" = ");
    std::string value = line.substr(eq + 3);
    if (value.size() >= 2 && value.front() == '"') value = value.substr(1, value.size() - 2);
    sim[line.substr(0, eq)] = value;
  }
  world["simulator"] = sim;
  write_text(oracle / "world.json", world.dump(2) + "\n");

  const InteractionLog log = bundle.biased_log();
  std::size_t exposures = bundle.exposures.size();
  std::cout << fmt::format(
      "simulated {} users x {} items: {} clicks, {} exposures\n"
      "  log:    {}\n  oracle: {} (evaluation only)\n"
      "use: --set data.path={} --set data.oracle_dir={}\n",
      config.simulator.n_users, config.simulator.n_items, log.size(), exposures,
      log_path.string(), oracle.string(), log_path.string(), oracle.string());
  return 0;
}

int cmd_train(const Options& opt) {
  const RunConfig config = resolve(opt);
  const Dataset dataset = load_dataset(config);
  TrainedModel trained = train_model(config, dataset);
  CheckpointManifest m;
  m.train_hash = train_hash(config);
  m.mode = to_string(config.objective.mode);
  m.backbone = config.backbone;
  m.dims = trained.model->dims();
  m.gaps = dataset.data.gaps;
  m.best_epoch = trained.result.best_epoch;
  m.best_val_hr10 = trained.result.best_val_hr10;
  const fs::path dir = out_dir(config);
  save_checkpoint(checkpoint_dir(config, opt), trained.result.params, m);
  write_text(dir / "history.csv", artifact_stamp(config) + history_csv(trained.result.history));
  write_text(dir / "config.toml", canonical_config(config));
  std::cout << fmt::format("best epoch {} (val HR@10 {:.4f}); checkpoint {}\n",
                           trained.result.best_epoch, trained.result.best_val_hr10,
                           checkpoint_dir(config, opt).string());
  return 0;
}

int cmd_eval(const Options& opt) {
  const RunConfig config = resolve(opt);
  const Dataset dataset = load_dataset(config);
  const ParamRegistry params = load_matching(config, opt);
  const auto model = make_model(config, dataset);
  const MetricReport report = evaluate_model(config, dataset, *model, params);
  const std::string text = report.to_json() + "\n";
  write_text(out_dir(config) / "report.json", text);
  for (const auto& m : report.metrics) {
    std::cout << fmt::format("HR@{} {:.4f}  NDCG@{} {:.4f}\n", m.k, m.hr, m.k, m.ndcg);
  }
  std::cout << fmt::format("{} users evaluated, {} skipped\n", report.users_evaluated,
                           report.users_skipped);
  return 0;
}

int cmd_ablate(const Options& opt) {
  const RunConfig config = resolve(opt);
  const Dataset dataset = load_dataset(config);
  const auto rows = run_ablation(config, dataset);
  const std::string table = ablation_table(rows, config.eval.protocol.cutoffs);
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(config);
  j["seed"] = config.seed;
  j["testset"] = config.eval.testset;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : rows) list.push_back(nlohmann::ordered_json::parse(r.report.to_json(false)));
  j["variants"] = list;
  write_text(out_dir(config) / "ablation.json", j.dump(2) + "\n");
  write_text(out_dir(config) / "ablation.md",
             fmt::format("<!-- config_hash={} seed={} -->\n", config_hash(config), config.seed) +
                 table);
  std::cout << table;
  return 0;
}

int cmd_analyze(const Options& opt) {
  const RunConfig config = resolve(opt);
  const Dataset dataset = load_dataset(config);
  const auto model = make_model(config, dataset);
  ParamRegistry params;
  if (opt.untrained) {
    Rng rng = make_rng(config.seed, 1);
    model->register_params(params, rng, config.train.symmetric_init);
  } else {
    params = load_matching(config, opt);
  }
  const PropensityAnalysis a = analyze_propensity(config, dataset, *model, params);
  const fs::path dir = out_dir(config);

  std::string users = artifact_stamp(config) + "user,rank,propensity_gap\n";
  for (const auto& u : a.report.users) {
    users += fmt::format("{},{},{}\n", dataset.log.user_name(u.user), u.rank,
                         u.propensity_gap.value_or(0.0));
  }
  std::string hist = artifact_stamp(config) + "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < a.histogram.counts.size(); ++b) {
    hist += fmt::format("{},{},{}\n", a.histogram.edges[b], a.histogram.edges[b + 1],
                        a.histogram.counts[b]);
  }
  write_text(dir / "propensity_gap.csv", users);
  write_text(dir / "propensity_histogram.csv", hist);
  write_text(dir / "analysis.json", a.report.to_json(false) + "\n");

  std::size_t positive = 0;
  for (double g : a.gaps) positive += g > 0.0 ? 1 : 0;
  std::cout << fmt::format("{} users, mean propensity gap {:.4g}, positive for {}\n",
                           a.gaps.size(), a.report.mean_propensity_gap.value_or(0.0), positive);
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("tips");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("TIPS_LOG_LEVEL")) {
    const auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only honour real names.
    if (parsed != spdlog::level::off || std::string(level) == "off") spdlog::set_level(parsed);
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  if (!spdlog::get("tips")) configure_logging();

  CLI::App app{"Time-aware inverse propensity scoring for sequential recommendation", "tips"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&opt](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config_path, "configuration file (key = value)");
    sub->add_option("-s,--set", opt.overrides, "override, e.g. train.epochs=5")
        ->allow_extra_args(false);
  };
  auto* ingest = app.add_subcommand("ingest", "load a log and report dataset statistics");
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a biased log plus oracle files");
  auto* train_cmd = app.add_subcommand("train", "train a model and save the best checkpoint");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "train and compare the ablation variants");
  auto* analyze = app.add_subcommand("analyze", "per-user propensity gap of positives");
  auto* print = app.add_subcommand("print-config", "print the resolved configuration");
  for (auto* sub : {ingest, simulate_cmd, train_cmd, eval_cmd, ablate, analyze, print}) common(sub);
  for (auto* sub : {train_cmd, eval_cmd, analyze}) {
    sub->add_option("--checkpoint", opt.checkpoint, "checkpoint directory");
  }
  analyze->add_flag("--untrained", opt.untrained, "analyze freshly initialized parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(opt);
    if (*simulate_cmd) return cmd_simulate(opt);
    if (*train_cmd) return cmd_train(opt);
    if (*eval_cmd) return cmd_eval(opt);
    if (*ablate) return cmd_ablate(opt);
    if (*analyze) return cmd_analyze(opt);
    if (*print) return cmd_print_config(opt);
  } catch (const UserError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 2;
  }
  return 2;
}

}  // namespace tips::cli
