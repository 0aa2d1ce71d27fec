#include "tips_cli/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "tips/errors.hpp"
#include "tips/rng.hpp"

namespace tips::cli {

Dataset load_dataset(const RunConfig& config) {
  if (config.data.path.empty()) throw ConfigError("data.path is not set");
  Dataset d;
  d.log = load_log(config.data.path, config.data.format());
  d.data = prepare_training_data(d.log, config.model.max_len, config.objective.ips_smoothing);
  spdlog::info("loaded {}: {} users, {} items, {} interactions ({} users dropped)",
               config.data.path, d.log.n_users(), d.log.n_items(), d.log.size(),
               d.data.splits.dropped_users);
  return d;
}

OracleBundle load_oracle(const std::filesystem::path& dir, const InteractionLog& log) {
  const auto path = dir / "world.json";
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open oracle description '{}'", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  RunConfig tmp;
  try {
    for (const auto& [key, value] : j.at("simulator").items()) {
      set_value(tmp, "simulator." + key,
                {value.is_string() ? value.get<std::string>() : value.dump()});
    }
    tmp.simulator.validate();
    OracleBundle bundle = simulate(tmp.simulator, j.at("seed").get<std::uint64_t>());
    if (bundle.biased_log().size() != log.size()) {
      throw DataError(fmt::format("{} does not describe the loaded log ({} vs {} interactions)",
                                  path.string(), bundle.biased_log().size(), log.size()));
    }
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::unique_ptr<TipsModel> make_model(const RunConfig& config, const Dataset& dataset) {
  ModelDims dims = config.model;
  dims.n_items = dataset.data.n_items;
  return std::make_unique<TipsModel>(dims, config.objective.mode, config.backbone);
}

TrainedModel train_model(const RunConfig& config, const Dataset& dataset) {
  TrainedModel out;
  out.model = make_model(config, dataset);
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  out.result = train(*out.model, config.objective, config.counterfactual, tc, dataset.data);
  return out;
}

std::vector<EvalCase> eval_cases(const RunConfig& config, const Dataset& dataset) {
  if (config.eval.testset == "loo") return test_cases(dataset.data);
  if (config.data.oracle_dir.empty()) {
    throw ConfigError("eval.testset = \"unbiased\" needs data.oracle_dir");
  }
  const OracleBundle bundle = load_oracle(config.data.oracle_dir, dataset.log);
  return unbiased_testset(bundle, dataset.log, dataset.data, config.eval.positives_per_user);
}

MetricReport evaluate_model(const RunConfig& config, const Dataset& dataset,
                            const TipsModel& model, const ParamRegistry& params,
                            bool with_propensity) {
  const ModelScorer scorer(model, params, dataset.data.gaps, &dataset.data.static_propensity);
  const auto cases = eval_cases(config, dataset);
  MetricReport report =
      evaluate(scorer, cases, dataset.data.n_items, config.eval.protocol, with_propensity);
  report.config_hash = config_hash(config);
  report.label = to_string(model.mode());
  return report;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const Dataset& dataset) {
  std::vector<AblationRow> rows;
  for (Mode mode : {Mode::kTips, Mode::kNoTime, Mode::kNoIps, Mode::kStaticIps}) {
    RunConfig variant = config;
    variant.objective.mode = mode;
    spdlog::info("ablation: training {}", to_string(mode));
    TrainedModel trained = train_model(variant, dataset);
    MetricReport report = evaluate_model(variant, dataset, *trained.model, trained.result.params);
    report.config_hash = config_hash(config);
    rows.push_back({mode, std::move(report)});
  }
  return rows;
}

namespace {

std::string variant_name(Mode mode) {
  switch (mode) {
    case Mode::kTips: return "TIPS";
    case Mode::kNoTime: return "TIPS w/o time";
    case Mode::kNoIps: return "TIPS w/o IPS";
    case Mode::kStaticIps: return "TIPS w/o EP&time";
    case Mode::kNone: return "base";
  }
  return to_string(mode);
}

std::string cell(double value, double base, bool is_base) {
  if (is_base) return fmt::format("{:.4f}", value);
  const double rel = base > 0.0 ? 100.0 * (value - base) / base : 0.0;
  return fmt::format("{:.4f} ({:+.2f}%)", value, rel);
}

}  // namespace

std::string ablation_table(const std::vector<AblationRow>& rows,
                           const std::vector<std::size_t>& cutoffs) {
  std::string out = "| Variant |";
  std::string rule = "|---|";
  for (std::size_t k : cutoffs) {
    out += fmt::format(" HR@{} | NDCG@{} |", k, k);
    rule += "---|---|";
  }
  out += "\n" + rule + "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += fmt::format("| {} |", variant_name(rows[r].mode));
    for (std::size_t k : cutoffs) {
      out += fmt::format(" {} | {} |", cell(rows[r].report.hr(k), rows[0].report.hr(k), r == 0),
                         cell(rows[r].report.ndcg(k), rows[0].report.ndcg(k), r == 0));
    }
    out += "\n";
  }
  return out;
}

PropensityAnalysis analyze_propensity(const RunConfig& config, const Dataset& dataset,
                                      const TipsModel& model, const ParamRegistry& params) {
  auto all = eval_cases(config, dataset);
  std::erase_if(all, [](const EvalCase& c) { return !c.positive || c.history.empty(); });
  Rng rng = make_rng(config.eval.protocol.seed, 7);
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > config.eval.analyze_users) all.resize(config.eval.analyze_users);

  const ModelScorer scorer(model, params, dataset.data.gaps, &dataset.data.static_propensity);
  if (!scorer.has_propensity()) {
    throw ConfigError(fmt::format("mode {} has no propensity model to analyze",
                                  to_string(model.mode())));
  }
  EvalProtocol protocol = config.eval.protocol;
  protocol.max_users = 0;
  PropensityAnalysis out;
  out.report = evaluate(scorer, all, dataset.data.n_items, protocol, true);
  out.report.config_hash = config_hash(config);
  out.report.label = to_string(model.mode());
  for (const auto& u : out.report.users) {
    if (u.propensity_gap) out.gaps.push_back(*u.propensity_gap);
  }
  out.histogram = histogram(out.gaps, config.eval.histogram_bins);
  return out;
}

std::string artifact_stamp(const RunConfig& config) {
  return fmt::format("# config_hash={} seed={}\n", config_hash(config), config.seed);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw DataError(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace tips::cli
