#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tips/evaluation.hpp"
#include "tips/interaction_log.hpp"
#include "tips/tensor.hpp"

namespace tips {

enum class ExposurePolicy { kUniform, kPopularitySkew, kRecencySkew };

std::string to_string(ExposurePolicy policy);
ExposurePolicy parse_policy(const std::string& name);

struct WorldSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  std::size_t latent_dim = 8;
  std::size_t horizon = 30;  // steps
  std::size_t slate_size = 8;
  ExposurePolicy policy = ExposurePolicy::kPopularitySkew;
  double beta = 1.0;               // popularity skew exponent
  double recency_scale = 5.0;      // steps; recency-skew decay
  double drift_amplitude = 0.0;    // in [0, 1); sinusoidal popularity drift
  double drift_period = 20.0;      // steps
  double similarity_boost = 0.0;   // exposure tilt toward the last click
  double affinity_scale = 1.0;     // std of affinities
  double click_bias = -2.0;        // added to affinity inside the logistic
  bool exclude_clicked = true;     // the policy does not re-show clicked items
  Timestamp start_time = 1'000'000'000;
  Timestamp seconds_per_step = 86400;

  /// Throws ConfigError for invalid values.
  void validate() const;
};

struct ExposureRecord {
  UserIndex user = 0;
  ItemIndex item = 0;
  std::size_t step = 0;
  double probability = 0.0;
  bool clicked = false;
};

// Everything the simulation produced. Item and user indices are world
// indices; raw ids in the emitted log are "u<index>" and "i<index>".
struct OracleBundle {
  WorldSpec spec;
  std::uint64_t seed = 0;
  std::vector<Interaction> clicks;        // the biased log, time ordered
  std::vector<ExposureRecord> exposures;  // evaluation only
  Tensor2 affinity;                       // n_users x n_items, evaluation only
  /// Exposure probabilities of the policy one step after the horizon, given
  /// the final click state (n_users x n_items). Evaluation only.
  Tensor2 final_propensity;
  Timestamp final_time = 0;

  InteractionLog biased_log() const;
};

/// Poisson-sampling inclusion probabilities proportional to the weights,
/// capped at 1 and summing to min(slate, #positive weights).
std::vector<double> inclusion_probabilities(std::span<const double> weights, std::size_t slate);

/// Policy weights over items for one user at one step. `last_click` is the
/// world index of the user's last click, or n_items when there is none.
std::vector<double> policy_weights(const WorldSpec& spec, const std::vector<std::size_t>& pop_rank,
                                   const std::vector<double>& phase,
                                   const std::vector<double>& release,
                                   const Tensor2& item_factors, std::size_t step,
                                   ItemIndex last_click, const std::vector<bool>& clicked);

OracleBundle simulate(const WorldSpec& spec, std::uint64_t seed);

/// Per user of `data`: one case per positive, where the positives are the
/// `positives_per_user` highest-affinity vocabulary items the user never
/// clicked. History = the user's most recent events; negatives exclude every
/// clicked item and every positive. A user with no candidate yields one case
/// without a positive, which evaluate() skips and counts.
std::vector<EvalCase> unbiased_testset(const OracleBundle& bundle, const InteractionLog& log,
                                       const TrainingData& data,
                                       std::size_t positives_per_user = 1);

/// Writes the biased log as "user::item::1::timestamp".
void write_biased_log(const OracleBundle& bundle, const std::filesystem::path& path);
/// Oracle files, each headed by an "evaluation only" comment line.
void write_oracle_files(const OracleBundle& bundle, const std::filesystem::path& dir);

}  // namespace tips
