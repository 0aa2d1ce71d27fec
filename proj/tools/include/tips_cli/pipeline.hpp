#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tips/checkpoint.hpp"
#include "tips/evaluation.hpp"
#include "tips/interaction_log.hpp"
#include "tips/simulator.hpp"
#include "tips/training.hpp"
#include "tips_cli/config.hpp"

namespace tips::cli {

struct Dataset {
  InteractionLog log;
  TrainingData data;
};

Dataset load_dataset(const RunConfig& config);

/// Rebuilds the oracle of a simulated dataset from <dir>/world.json. Throws
/// DataError when the regenerated log disagrees with `log`.
OracleBundle load_oracle(const std::filesystem::path& dir, const InteractionLog& log);

struct TrainedModel {
  std::unique_ptr<TipsModel> model;
  TrainResult result;
};

TrainedModel train_model(const RunConfig& config, const Dataset& dataset);
std::unique_ptr<TipsModel> make_model(const RunConfig& config, const Dataset& dataset);

/// Test cases selected by eval.testset.
std::vector<EvalCase> eval_cases(const RunConfig& config, const Dataset& dataset);

MetricReport evaluate_model(const RunConfig& config, const Dataset& dataset,
                            const TipsModel& model, const ParamRegistry& params,
                            bool with_propensity = false);

struct AblationRow {
  Mode mode;
  MetricReport report;
};

std::vector<AblationRow> run_ablation(const RunConfig& config, const Dataset& dataset);

/// Table with relative deltas against the first row, e.g. "0.1234 (-2.47%)".
std::string ablation_table(const std::vector<AblationRow>& rows,
                           const std::vector<std::size_t>& cutoffs);

struct PropensityAnalysis {
  MetricReport report;  // per-user gaps in report.users
  std::vector<double> gaps;
  Histogram histogram;
};

/// Up to eval.analyze_users randomly chosen users, 1 positive + negatives each.
PropensityAnalysis analyze_propensity(const RunConfig& config, const Dataset& dataset,
                                      const TipsModel& model, const ParamRegistry& params);

/// "# config_hash=<hash> seed=<seed>" line heading every CSV artifact.
std::string artifact_stamp(const RunConfig& config);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tips::cli
