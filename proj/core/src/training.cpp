#include "tips/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tips/errors.hpp"
#include "tips/evaluation.hpp"

namespace tips {

TrainingData prepare_training_data(const InteractionLog& log, std::size_t max_len,
                                   double ips_smoothing, double gap_slack) {
  TrainingData data;
  data.n_items = log.n_items();
  data.splits = make_splits(log, max_len);
  if (data.splits.users.empty()) throw DataError("no user has the 3 events a split needs");
  data.gaps = GapNormalizer::fit(data.splits, gap_slack);
  std::vector<std::vector<Event>> train;
  train.reserve(data.splits.users.size());
  data.t_min = std::numeric_limits<Timestamp>::max();
  data.t_max = std::numeric_limits<Timestamp>::min();
  for (const UserSplit& s : data.splits.users) {
    train.push_back(s.train);
    for (const Event& e : s.train) {
      data.t_min = std::min(data.t_min, e.timestamp);
      data.t_max = std::max(data.t_max, e.timestamp);
    }
  }
  data.popularity = PopularityIndex::from_sequences(data.n_items, train);
  data.static_propensity = StaticPropensity(data.popularity, ips_smoothing);
  return data;
}

std::vector<TrainExample> enumerate_examples(const TrainingData& data,
                                             std::size_t positions_per_user) {
  std::vector<TrainExample> out;
  for (std::size_t s = 0; s < data.splits.users.size(); ++s) {
    const std::size_t n = data.splits.users[s].train_window().size();
    std::size_t first = 1;
    if (positions_per_user > 0 && n > positions_per_user + 1) first = n - positions_per_user;
    for (std::size_t p = first; p < n; ++p) out.push_back({s, p});
  }
  return out;
}

PreparedExample prepare_example(const TrainingData& data, const TrainExample& ex) {
  const auto window = data.splits.users.at(ex.split).train_window();
  if (ex.position == 0 || ex.position >= window.size()) {
    throw IndexError(fmt::format("example position {} outside window of {}", ex.position,
                                 window.size()));
  }
  PreparedExample p;
  std::vector<Timestamp> times;
  for (std::size_t i = 0; i < ex.position; ++i) {
    p.items.push_back(window[i].item);
    times.push_back(window[i].timestamp);
  }
  p.gaps = data.gaps.normalize(times);
  p.last_time = times.back();
  p.target = window[ex.position].item;
  p.target_time = window[ex.position].timestamp;
  p.target_gap = data.gaps.transform(p.target_time - p.last_time);
  return p;
}

namespace {

// 1+J scores -> J differences y_0 - y_j.
Tensor2 difference_matrix(std::size_t j) {
  Tensor2 m(1 + j, j);
  for (std::size_t c = 0; c < j; ++c) {
    m(0, c) = 1.0;
    m(1 + c, c) = -1.0;
  }
  return m;
}

ItemIndex uniform_other_item(ItemIndex item, std::size_t n_items, Rng& rng) {
  ItemIndex v = uniform_index(rng, n_items - 1);
  return v >= item ? v + 1 : v;
}

}  // namespace

BatchLoss batch_loss(Tape& tape, ParamRegistry& params, const TipsModel& model,
                     const ObjectiveConfig& objective, const TrainingData& data,
                     const Batch& batch, LossTerms terms,
                     std::span<const double> frozen_propensities) {
  if (batch.examples.empty()) throw PreconditionError("empty batch");
  if (!frozen_propensities.empty() && frozen_propensities.size() != batch.examples.size()) {
    throw DimensionError("one frozen propensity per example is required");
  }
  const ModeTraits& traits = model.traits();
  const bool want_ep = traits.exposure_loss && (terms == LossTerms::kExposureOnly ||
                                                objective.gamma > 0.0);
  const bool want_bpr = terms == LossTerms::kAll;

  BatchLoss out;
  std::vector<TipsModel::Encoded> encoded;
  encoded.reserve(batch.examples.size());
  std::vector<Var> diffs;
  std::vector<Var> factual_raw;
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    const PreparedExample& ex = batch.examples[i];
    encoded.push_back(model.encode(tape, params, ex.items, ex.gaps));
    const auto& enc = encoded.back();

    double s = 1.0;
    if (traits.exposure_model && (traits.model_propensity || want_ep)) {
      const auto p = model.propensity(tape, params, enc, ex.target, ex.target_gap);
      factual_raw.push_back(p.raw);
      if (traits.model_propensity) s = p.propensity.scalar();
    }
    if (!frozen_propensities.empty()) s = frozen_propensities[i];

    double w = 1.0;
    if (traits.model_propensity) {
      w = tips_weight(traits.use_time ? ex.target_gap : 0.0, s, objective.mu, objective.epsilon);
    } else if (traits.static_propensity) {
      s = data.static_propensity.propensity(ex.target);
      w = 1.0 / s;
    } else {
      s = 1.0;
    }
    out.propensities.push_back(s);
    out.weights.push_back(w);

    if (want_bpr) {
      Var u = model.user_vector(tape, params, enc);
      std::vector<ItemIndex> candidates{ex.target};
      candidates.insert(candidates.end(), ex.bpr_negatives.begin(), ex.bpr_negatives.end());
      Var y = score_candidates(tape, params, u, candidates);
      diffs.push_back(ad::matmul(y, tape.constant(difference_matrix(ex.bpr_negatives.size()))));
    }
  }

  Var total = tape.constant(Tensor2(1, 1));
  if (want_bpr) {
    out.bpr = bpr_tips_loss(tape, diffs, out.weights, out.propensities);
    total = *out.bpr;
  }
  if (want_ep) {
    std::vector<Var> pos, neg;
    for (const ExposurePair& pair : batch.exposure.positives) {
      if (pair.kind == ExposureKind::kFactual) {
        pos.push_back(factual_raw.at(pair.anchor));
        continue;
      }
      const PreparedExample& ex = batch.examples.at(pair.anchor);
      const double gap = data.gaps.transform(std::llabs(pair.timestamp - ex.last_time));
      pos.push_back(
          model.propensity(tape, params, encoded[pair.anchor], pair.item, gap, pair.delta).raw);
    }
    for (const ExposurePair& pair : batch.exposure.negatives) {
      const PreparedExample& ex = batch.examples.at(pair.anchor);
      const double gap = data.gaps.transform(std::llabs(pair.timestamp - ex.last_time));
      neg.push_back(model.propensity(tape, params, encoded[pair.anchor], pair.item, gap).raw);
    }
    out.ep = exposure_loss(tape, pos, neg);
    total = want_bpr ? ad::add(total, ad::scale(*out.ep, objective.gamma)) : *out.ep;
  }
  out.total = total;
  return out;
}

BatchBuilder::BatchBuilder(const TrainingData& data, const TipsModel& model,
                           CounterfactualConfig cf, std::size_t random_negatives)
    : data_(data), model_(model), cf_(cf), random_negatives_(random_negatives) {
  if (data.n_items < 2) throw PreconditionError("the catalog needs at least 2 items");
  global_top_ = data.popularity.top_k_global(cf.top_k + 1);
  if (!model.traits().counterfactual_negatives && !model.traits().exposure_loss) return;
  std::vector<Timestamp> times;
  for (const UserSplit& s : data.splits.users) {
    offsets_.push_back(times.size());
    const auto window = s.train_window();
    for (std::size_t p = 1; p < window.size(); ++p) times.push_back(window[p].timestamp);
  }
  ranked_ = data.popularity.top_k_many(times, cf.window_seconds, cf.top_k + 1);
}

void BatchBuilder::refresh_similar(const ParamRegistry& params, Rng& rng) {
  similar_ = similar_items(params.value(param_names::kExposure), rng);
}

Batch BatchBuilder::build(std::span<const TrainExample> examples, bool with_exposure,
                          Rng& rng) const {
  const ModeTraits& traits = model_.traits();
  const std::size_t n_items = data_.n_items;
  Batch batch;
  std::vector<FactualPair> factual;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    PreparedExample ex = prepare_example(data_, examples[i]);
    const bool need_cf = traits.counterfactual_negatives || (with_exposure && traits.exposure_loss);
    CounterfactualTriple triple;
    if (need_cf) {
      triple.similar = similar_.empty() ? uniform_other_item(ex.target, n_items, rng)
                                        : similar_.at(ex.target);
      const auto& ranked = ranked_.at(offsets_.at(examples[i].split) + examples[i].position - 1);
      auto support = popular_support(ranked, ex.target, cf_.top_k);
      if (support.empty()) support = popular_support(global_top_, ex.target, cf_.top_k);
      triple.popular = sample_popular(support, ex.target, n_items, rng);
      triple.delta = draw_delta(model_.dims().dim, cf_.delta_bound, rng);
    }
    if (traits.counterfactual_negatives) {
      // The jitter partner is the same item; candidates carry no time, so its
      // pairwise difference is identically zero.
      ex.bpr_negatives = {triple.similar, triple.popular, ex.target};
      for (std::size_t r = 0; r < random_negatives_; ++r) {
        ex.bpr_negatives.push_back(uniform_other_item(ex.target, n_items, rng));
      }
    } else {
      for (std::size_t r = 0; r < 3 + random_negatives_; ++r) {
        ex.bpr_negatives.push_back(uniform_other_item(ex.target, n_items, rng));
      }
    }
    if (with_exposure && traits.exposure_loss) {
      factual.push_back(FactualPair{ex.target, ex.target_time, triple, i});
    }
    batch.examples.push_back(std::move(ex));
  }
  if (!factual.empty()) {
    batch.exposure = build_sample_sets(factual, n_items, data_.t_min, data_.t_max, cf_, rng);
  }
  return batch;
}

namespace {

std::string propensity_summary(std::span<const double> s) {
  if (s.empty()) return "none";
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double m = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  return fmt::format("min {:.4g} mean {:.4g} max {:.4g}", *lo, m, *hi);
}

std::string grad_summary(const ParamRegistry& params) {
  std::string out;
  for (const auto& [name, p] : params.items()) {
    double s = 0.0;
    for (double g : p.grad.values()) s += g * g;
    out += fmt::format("{}={:.3g} ", name, std::sqrt(s));
  }
  return out;
}

std::string value_summary(const ParamRegistry& params) {
  std::string out;
  for (const auto& [name, p] : params.items()) {
    double s = 0.0;
    for (double v : p.value.values()) s += v * v;
    out += fmt::format("{}={:.3g} ", name, std::sqrt(s));
  }
  return out;
}

double validation_hr10(const TipsModel& model, const ParamRegistry& params,
                       const TrainingData& data, std::span<const EvalCase> cases,
                       std::uint64_t seed) {
  ModelScorer scorer(model, params, data.gaps);
  EvalProtocol protocol;
  protocol.cutoffs = {10};
  protocol.seed = seed;
  return evaluate(scorer, cases, data.n_items, protocol).hr(10);
}

}  // namespace

TrainResult train(const TipsModel& model, const ObjectiveConfig& objective,
                  const CounterfactualConfig& cf, const TrainConfig& config,
                  const TrainingData& data, const EpochCallback& on_epoch) {
  objective.validate();
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(config.lr > 0.0)) throw ConfigError("lr must be positive");

  Rng init_rng = make_rng(config.seed, 1);
  TrainResult result;
  ParamRegistry params;
  model.register_params(params, init_rng, config.symmetric_init);
  auto optimizer = make_optimizer(config.optimizer, config.lr);

  std::vector<TrainExample> examples = enumerate_examples(data, config.positions_per_user);
  if (examples.empty()) throw DataError("no training example has a history item");
  std::vector<EvalCase> val = validation_cases(data);
  if (config.val_users > 0 && val.size() > config.val_users) {
    Rng pick = make_rng(config.seed, 2);
    std::shuffle(val.begin(), val.end(), pick);
    val.resize(config.val_users);
    std::sort(val.begin(), val.end(),
              [](const EvalCase& a, const EvalCase& b) { return a.user < b.user; });
  }

  BatchBuilder builder(data, model, cf, config.random_negatives);
  Rng rng = make_rng(config.seed, 3);
  const bool has_ep = model.traits().exposure_loss && objective.gamma > 0.0;
  const std::size_t pretrain = has_ep ? config.ep_pretrain_epochs : 0;

  for (std::size_t epoch = 0; epoch < pretrain + config.epochs; ++epoch) {
    const bool pretraining = epoch < pretrain;
    std::shuffle(examples.begin(), examples.end(), rng);
    if (model.traits().counterfactual_negatives || has_ep) builder.refresh_similar(params, rng);

    EpochRecord rec;
    rec.epoch = pretraining ? 0 : epoch - pretrain + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, examples.size() - start);
      const Batch batch =
          builder.build(std::span(examples).subspan(start, n), has_ep, rng);
      params.zero_grad();
      Tape tape;
      std::optional<BatchLoss> computed;
      try {
        computed = batch_loss(tape, params, model, objective, data, batch,
                              pretraining ? LossTerms::kExposureOnly : LossTerms::kAll);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("{} at epoch {} batch {}; parameter norms: {}", e.what(),
                                       rec.epoch, batches, value_summary(params)));
      }
      const BatchLoss& loss = *computed;
      const double value = loss.total.scalar();
      if (!std::isfinite(value)) {
        throw NumericError(fmt::format(
            "non-finite loss at epoch {} batch {}; propensities: {}; parameter norms: {}",
            rec.epoch, batches, propensity_summary(loss.propensities), value_summary(params)));
      }
      tape.backward(loss.total);
      const double gn = params.grad_norm();
      if (!std::isfinite(gn)) {
        throw NumericError(fmt::format("non-finite gradient at epoch {} batch {}; grads: {}; "
                                       "propensities: {}",
                                       rec.epoch, batches, grad_summary(params),
                                       propensity_summary(loss.propensities)));
      }
      optimizer->step(params);
      rec.loss += value;
      if (loss.bpr) rec.bpr += loss.bpr->scalar();
      if (loss.ep) rec.ep += loss.ep->scalar();
      rec.grad_norm += gn;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    rec.loss /= nb;
    rec.bpr /= nb;
    rec.ep /= nb;
    rec.grad_norm /= nb;
    rec.val_hr10 = validation_hr10(model, params, data, val, config.seed);
    spdlog::info("epoch {}{}: L={:.6f} L_BPR={:.6f} L_EP={:.6f} val_HR@10={:.4f} |g|={:.4g}",
                 rec.epoch, pretraining ? " (exposure pretraining)" : "", rec.loss, rec.bpr,
                 rec.ep, rec.val_hr10, rec.grad_norm);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!pretraining && rec.val_hr10 > result.best_val_hr10) {
      result.best_val_hr10 = rec.val_hr10;
      result.best_epoch = rec.epoch;
      result.params = params;
    }
  }
  if (result.best_epoch == 0) result.params = params;
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch,L,L_BPR,L_EP,val_HR@10,grad_norm\n";
  for (const EpochRecord& r : history) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.epoch, r.loss, r.bpr,
                       r.ep, r.val_hr10, r.grad_norm);
  }
  return out.str();
}

}  // namespace tips
