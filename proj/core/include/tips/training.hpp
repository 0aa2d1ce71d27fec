#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tips/counterfactual.hpp"
#include "tips/model.hpp"
#include "tips/optimizer.hpp"
#include "tips/splits.hpp"

namespace tips {

/// Splits plus the statistics fitted on the training portion only.
struct TrainingData {
  std::size_t n_items = 0;
  SplitSpec splits;
  GapNormalizer gaps;
  PopularityIndex popularity;
  StaticPropensity static_propensity;
  Timestamp t_min = 0;  // training time span
  Timestamp t_max = 0;
};

TrainingData prepare_training_data(const InteractionLog& log, std::size_t max_len,
                                   double ips_smoothing, double gap_slack = 0.5);

/// One next-item prediction: the items of a train window before `position`
/// predict the item at `position`.
struct TrainExample {
  std::size_t split = 0;  // index into TrainingData::splits.users
  std::size_t position = 0;
};

/// Every position with at least one history item. With positions_per_user > 0
/// only the most recent positions of each user are kept.
std::vector<TrainExample> enumerate_examples(const TrainingData& data,
                                             std::size_t positions_per_user = 0);

/// A training example resolved into model inputs.
struct PreparedExample {
  std::vector<ItemIndex> items;
  std::vector<double> gaps;
  Timestamp last_time = 0;
  ItemIndex target = 0;
  Timestamp target_time = 0;
  double target_gap = 0.0;
  std::vector<ItemIndex> bpr_negatives;
};

PreparedExample prepare_example(const TrainingData& data, const TrainExample& ex);

struct Batch {
  std::vector<PreparedExample> examples;
  /// Exposure pairs; anchors index `examples`. Empty when L_EP is off.
  ExposureSampleSets exposure;
};

struct BatchLoss {
  Var total;
  std::optional<Var> bpr;
  std::optional<Var> ep;
  /// Propensity of each positive as used in the weights (before the floor).
  std::vector<double> propensities;
  std::vector<double> weights;
};

enum class LossTerms { kAll, kExposureOnly };

/// Full objective for one batch. With `frozen_propensities` the IPS weights
/// use those values instead of the current model output, which makes the
/// loss a smooth function of the parameters for gradient checking.
BatchLoss batch_loss(Tape& tape, ParamRegistry& params, const TipsModel& model,
                     const ObjectiveConfig& objective, const TrainingData& data,
                     const Batch& batch, LossTerms terms = LossTerms::kAll,
                     std::span<const double> frozen_propensities = {});

/// Assembles BPR negatives and exposure sample sets for a batch.
class BatchBuilder {
 public:
  BatchBuilder(const TrainingData& data, const TipsModel& model, CounterfactualConfig cf,
               std::size_t random_negatives);

  /// Recomputes the similar-item table from the current exposure embeddings.
  void refresh_similar(const ParamRegistry& params, Rng& rng);

  Batch build(std::span<const TrainExample> examples, bool with_exposure, Rng& rng) const;

 private:
  const TrainingData& data_;
  const TipsModel& model_;
  CounterfactualConfig cf_;
  std::size_t random_negatives_;
  std::vector<ItemIndex> similar_;
  std::vector<ItemIndex> global_top_;
  // Windowed Top-(K+1) list at every example's target time, flattened per split.
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<ItemIndex>> ranked_;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t ep_pretrain_epochs = 1;
  std::size_t positions_per_user = 0;
  std::size_t random_negatives = 0;  // extra uniform BPR negatives per positive
  std::size_t val_users = 0;         // 0 validates on every user
  bool symmetric_init = false;
  std::uint64_t seed = 42;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 for exposure pretraining
  double loss = 0.0;
  double bpr = 0.0;
  double ep = 0.0;
  double val_hr10 = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  ParamRegistry params;  // best-validation weights
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_hr10 = -1.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint end-to-end minimization with per-epoch validation HR@10. A non-finite
/// loss aborts with NumericError carrying gradient and propensity diagnostics.
TrainResult train(const TipsModel& model, const ObjectiveConfig& objective,
                  const CounterfactualConfig& cf, const TrainConfig& config,
                  const TrainingData& data, const EpochCallback& on_epoch = {});

/// epoch,L,L_BPR,L_EP,val_HR@10,grad_norm
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace tips
