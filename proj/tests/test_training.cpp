#include <gtest/gtest.h>

#include <numeric>

#include "helpers.hpp"
#include "tips/checkpoint.hpp"
#include "tips/errors.hpp"
#include "tips/evaluation.hpp"
#include "tips/grad_check.hpp"
#include "tips/simulator.hpp"
#include "tips/training.hpp"

using namespace tips;

TEST(TipsWeight, NoGapHalfPropensity) {
  for (double mu : {0.05, 0.5, 2.0}) EXPECT_DOUBLE_EQ(tips_weight(0.0, 0.5, mu, 0.05), 2.0);
}

TEST(TipsWeight, FloorActive) {
  EXPECT_DOUBLE_EQ(tips_weight(0.0, 0.05, 0.5, 0.05), 20.0);
  EXPECT_DOUBLE_EQ(tips_weight(0.0, 0.01, 0.5, 0.05), 20.0);
  EXPECT_DOUBLE_EQ(tips_weight(0.0, 0.0, 0.5, 0.05), 20.0);
}

TEST(TipsWeight, GridMonotonicity) {
  for (double s = 0.01; s <= 1.0; s += 0.01) {
    double prev = tips_weight(0.0, s, 0.5, 0.05);
    for (double g = 0.05; g <= 1.5; g += 0.05) {
      const double w = tips_weight(g, s, 0.5, 0.05);
      EXPECT_LT(w, prev);
      prev = w;
    }
  }
  for (double g = 0.0; g <= 1.5; g += 0.05) {
    double prev = tips_weight(g, 0.001, 0.5, 0.05);
    for (double s = 0.01; s <= 1.0; s += 0.01) {
      const double w = tips_weight(g, s, 0.5, 0.05);
      EXPECT_LE(w, prev);
      prev = w;
    }
  }
}

TEST(TipsWeight, CommonPropensityScalingKeepsOrder) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double gap = uniform_real(rng, 0, 1.5);
    std::vector<double> s(10);
    for (double& x : s) x = uniform_real(rng, 0.06, 1.0);
    const double c = uniform_real(rng, 0.06, 0.99);
    auto order = [&](double scale) {
      std::vector<double> w;
      for (double x : s) w.push_back(tips_weight(gap, x * scale, 0.5, 1e-9));
      std::vector<std::size_t> idx(w.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return w[a] < w[b]; });
      return idx;
    };
    EXPECT_EQ(order(1.0), order(c));
  }
}

TEST(BprTips, ZeroDifferencesClosedForm) {
  Tape t;
  const std::vector<Var> diffs{t.constant(Tensor2(1, 3)), t.constant(Tensor2(1, 3))};
  const std::vector<double> w{1.7, 1.7};
  const std::vector<double> s{0.4, 0.6};
  const double want = -(1.0 / 2.0) * (2 * 1.7 * 3 * std::log(0.5)) / (0.4 + 0.6);
  EXPECT_NEAR(bpr_tips_loss(t, diffs, w, s).scalar(), want, 1e-14);
}

TEST(BprTips, SaturationGoesToZero) {
  Tape t;
  const std::vector<Var> diffs{t.constant(Tensor2{{60.0, 80.0}})};
  const std::vector<double> w{2.0}, s{0.5};
  EXPECT_LT(bpr_tips_loss(t, diffs, w, s).scalar(), 1e-20);
}

TEST(BprTips, TwoPositiveBruteForce) {
  Tape t;
  const Tensor2 d1{{0.3, -1.2, 2.0}}, d2{{-0.5, 0.1, 0.7}};
  const std::vector<Var> diffs{t.constant(d1), t.constant(d2)};
  const std::vector<double> w{3.0, 0.8}, s{0.3, 0.9};
  double want = 0;
  for (double x : d1.values()) want += w[0] * std::log(1 / (1 + std::exp(-x)));
  for (double x : d2.values()) want += w[1] * std::log(1 / (1 + std::exp(-x)));
  want = -want / 2.0 / (0.3 + 0.9);
  EXPECT_NEAR(bpr_tips_loss(t, diffs, w, s).scalar(), want, 1e-14);
  EXPECT_THROW(bpr_tips_loss(t, {}, {}, {}), PreconditionError);
}

TEST(StaticIps, EqualCountsEqualWeights) {
  const std::vector<std::size_t> counts{3, 7, 3, 0};
  const StaticPropensity sp(counts, 1.0);
  EXPECT_EQ(sp.weight(0), sp.weight(2));
  EXPECT_TRUE(std::isfinite(sp.weight(3)));
  EXPECT_THROW(StaticPropensity(counts, 0.0), ConfigError);
}

TEST(StaticIps, FiveItemHandComputation) {
  const InteractionLog log = test::make_log({{0, 1, 0, 2}, {0, 3, 0}, {1, 0}});
  // Counts from the whole log: item0 5, item1 2, item2 1, item3 1, item4 unseen.
  std::vector<std::size_t> counts(5, 0);
  for (const auto& e : log.interactions()) ++counts[e.item];
  ASSERT_EQ(counts, (std::vector<std::size_t>{5, 2, 1, 1, 0}));
  const StaticPropensity sp(counts, 1.0);
  const double total = 6 + 3 + 2 + 2 + 1;
  const double want[5] = {6 / total, 3 / total, 2 / total, 2 / total, 1 / total};
  for (ItemIndex v = 0; v < 5; ++v) {
    EXPECT_NEAR(sp.propensity(v), want[v], 1e-15);
    EXPECT_NEAR(sp.weight(v), 1 / want[v], 1e-12);
  }
}

TEST(ModeTraitsTable, Switches) {
  const auto tips = ModeTraits::of(Mode::kTips);
  EXPECT_TRUE(tips.exposure_model && tips.use_time && tips.model_propensity && tips.exposure_loss);
  const auto nt = ModeTraits::of(Mode::kNoTime);
  EXPECT_FALSE(nt.use_time);
  EXPECT_TRUE(nt.model_propensity);
  const auto ni = ModeTraits::of(Mode::kNoIps);
  EXPECT_FALSE(ni.model_propensity);
  EXPECT_TRUE(ni.exposure_loss);
  const auto st = ModeTraits::of(Mode::kStaticIps);
  EXPECT_TRUE(st.static_propensity);
  EXPECT_FALSE(st.exposure_model || st.use_time || st.exposure_loss);
  const auto none = ModeTraits::of(Mode::kNone);
  EXPECT_FALSE(none.exposure_model || none.counterfactual_negatives || none.static_propensity);
  for (Mode m : {Mode::kTips, Mode::kNoTime, Mode::kNoIps, Mode::kStaticIps, Mode::kNone}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_mode("bogus"), ConfigError);
}

namespace {

struct Toy {
  InteractionLog log;
  TrainingData data;
};

Toy toy_log(std::size_t users, std::size_t items, std::size_t length, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::vector<std::vector<int>> seqs(users);
  for (auto& s : seqs) {
    int cur = static_cast<int>(uniform_index(rng, items));
    for (std::size_t i = 0; i < length; ++i) {
      s.push_back(cur);
      // Mostly step to the next item, so there is structure to learn.
      cur = uniform_real(rng, 0, 1) < 0.7 ? (cur + 1) % static_cast<int>(items)
                                           : static_cast<int>(uniform_index(rng, items));
    }
  }
  Toy t;
  t.log = test::make_log(seqs, 1'000'000, 3600);
  t.data = prepare_training_data(t.log, 10, 1.0);
  return t;
}

// Four users whose sequences cover all twelve items.
Toy four_user_toy() {
  std::vector<std::vector<int>> seqs(4);
  for (int u = 0; u < 4; ++u) {
    for (int i = 0; i < 6; ++i) seqs[u].push_back((3 * u + i) % 12);
  }
  Toy t;
  t.log = test::make_log(seqs, 1'000'000, 3600);
  t.data = prepare_training_data(t.log, 10, 1.0);
  return t;
}

}  // namespace

TEST(FullObjective, GradientCheckFourUsers) {
  const Toy toy = four_user_toy();
  ASSERT_EQ(toy.data.n_items, 12u);
  ModelDims dims{12, 8, 2, 10};
  for (Mode mode : {Mode::kTips, Mode::kNoTime, Mode::kNoIps, Mode::kStaticIps, Mode::kNone}) {
    TipsModel model(dims, mode, "attention");
    ParamRegistry params;
    Rng rng(5);
    model.register_params(params, rng, false);
    ObjectiveConfig obj;
    obj.mode = mode;
    BatchBuilder builder(toy.data, model, CounterfactualConfig{}, 1);
    builder.refresh_similar(params, rng);
    const auto examples = enumerate_examples(toy.data);
    const Batch batch = builder.build(examples, true, rng);
    std::vector<double> frozen;
    {
      Tape t;
      frozen = batch_loss(t, params, model, obj, toy.data, batch).propensities;
    }
    const bool model_ips = model.traits().model_propensity;
    auto loss = [&](Tape& t) {
      return batch_loss(t, params, model, obj, toy.data, batch, LossTerms::kAll,
                        model_ips ? std::span<const double>(frozen) : std::span<const double>())
          .total;
    };
    // The static-IPS loss is O(30), so a 1e-5 step leaves ~1e-10 of round-off
    // in the differences; 1e-4 keeps tiny gradients measurable.
    GradCheckOptions options;
    options.step = 1e-4;
    const auto report = grad_check(loss, params, 1e-4, options);
    EXPECT_TRUE(report.passed()) << to_string(mode) << " max " << report.max_rel_error;
    EXPECT_EQ(report.num_params_passing(), report.entries.size());
    for (const auto& e : report.entries) {
      if (e.max_rel_error > 1e-4) ADD_FAILURE() << e.name << " " << e.max_rel_error;
    }
    EXPECT_LT(test::fd_max_rel_error(params, loss, 1e-4), 1e-4) << to_string(mode);
  }
}

TEST(FullObjective, ZeroGammaNoIpsHasNoExposureTerm) {
  const Toy toy = four_user_toy();
  ModelDims dims{12, 8, 2, 10};
  TipsModel model(dims, Mode::kNoIps, "attention");
  ParamRegistry params;
  Rng rng(6);
  model.register_params(params, rng, false);
  ObjectiveConfig obj;
  obj.mode = Mode::kNoIps;
  obj.gamma = 0.0;
  BatchBuilder builder(toy.data, model, CounterfactualConfig{}, 0);
  const auto examples = enumerate_examples(toy.data);
  const Batch batch = builder.build(examples, true, rng);
  Tape t;
  const BatchLoss l = batch_loss(t, params, model, obj, toy.data, batch);
  EXPECT_FALSE(l.ep.has_value());
  ASSERT_TRUE(l.bpr.has_value());
  EXPECT_EQ(l.total.scalar(), l.bpr->scalar());
  for (double w : l.weights) EXPECT_EQ(w, 1.0);
  for (double s : l.propensities) EXPECT_EQ(s, 1.0);
}

TEST(FullObjective, ExposureOnlyTermsLeaveRecommenderUntouched) {
  const Toy toy = four_user_toy();
  ModelDims dims{12, 8, 2, 10};
  TipsModel model(dims, Mode::kTips, "attention");
  ParamRegistry params;
  Rng rng(6);
  model.register_params(params, rng, false);
  BatchBuilder builder(toy.data, model, CounterfactualConfig{}, 0);
  const Batch batch = builder.build(enumerate_examples(toy.data), true, rng);
  params.zero_grad();
  Tape t;
  const BatchLoss l =
      batch_loss(t, params, model, ObjectiveConfig{}, toy.data, batch, LossTerms::kExposureOnly);
  EXPECT_FALSE(l.bpr.has_value());
  t.backward(l.total);
  for (const auto& [name, p] : params.items()) {
    if (name.rfind("backbone.", 0) == 0) {
      for (double g : p.grad.values()) EXPECT_EQ(g, 0.0) << name;
    }
  }
}

TEST(Train, LossDecreasesOnMostEpochs) {
  const Toy toy = toy_log(50, 30, 12, 7);
  ModelDims dims{toy.data.n_items, 16, 2, 10};
  TipsModel model(dims, Mode::kTips, "attention");
  TrainConfig tc;
  tc.epochs = 30;
  tc.lr = 3e-4;
  tc.batch_size = 1024;  // one full batch per epoch
  tc.seed = 11;
  tc.ep_pretrain_epochs = 0;
  ObjectiveConfig obj;
  const TrainResult r = train(model, obj, CounterfactualConfig{}, tc, toy.data);
  std::vector<double> losses;
  for (const auto& e : r.history) {
    if (e.epoch > 0) losses.push_back(e.loss);
  }
  ASSERT_EQ(losses.size(), 30u);
  std::size_t decreasing = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) decreasing += losses[i] < losses[i - 1];
  EXPECT_GE(decreasing, static_cast<std::size_t>(0.8 * 29)) << "decreasing " << decreasing;
  EXPECT_GE(r.best_epoch, 1u);
  EXPECT_FALSE(history_csv(r.history).empty());
}

TEST(Train, Deterministic) {
  const Toy toy = toy_log(20, 15, 8, 8);
  ModelDims dims{toy.data.n_items, 8, 2, 10};
  TipsModel model(dims, Mode::kTips, "attention");
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3;
  const TrainResult a = train(model, ObjectiveConfig{}, CounterfactualConfig{}, tc, toy.data);
  const TrainResult b = train(model, ObjectiveConfig{}, CounterfactualConfig{}, tc, toy.data);
  for (const auto& [name, p] : a.params.items()) EXPECT_EQ(p.value, b.params.value(name)) << name;
}

TEST(Train, NoTimeModeInvariantToGlobalTimeShift) {
  const Toy toy = toy_log(20, 15, 8, 9);
  std::vector<RawInteraction> shifted;
  for (const auto& e : toy.log.interactions()) {
    shifted.push_back({toy.log.user_name(e.user), toy.log.item_name(e.item),
                       e.timestamp + 123'456'789, shifted.size() + 1});
  }
  const InteractionLog log2 = InteractionLog::build(shifted);
  const TrainingData data2 = prepare_training_data(log2, 10, 1.0);

  ModelDims dims{toy.data.n_items, 8, 2, 10};
  TipsModel model(dims, Mode::kNoTime, "attention");
  ObjectiveConfig obj;
  obj.mode = Mode::kNoTime;
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3;
  const TrainResult a = train(model, obj, CounterfactualConfig{}, tc, toy.data);
  const TrainResult b = train(model, obj, CounterfactualConfig{}, tc, data2);
  const ModelScorer sa(model, a.params, toy.data.gaps);
  const ModelScorer sb(model, b.params, data2.gaps);
  const auto ca = test_cases(toy.data);
  const auto cb = test_cases(data2);
  const MetricReport ra = evaluate(sa, ca, toy.data.n_items, EvalProtocol{}, true);
  const MetricReport rb = evaluate(sb, cb, data2.n_items, EvalProtocol{}, true);
  EXPECT_EQ(ra.to_json(), rb.to_json());
}

TEST(Train, NonFiniteLossAborts) {
  const Toy toy = toy_log(10, 12, 6, 10);
  ModelDims dims{toy.data.n_items, 8, 2, 10};
  TipsModel model(dims, Mode::kTips, "attention");
  TrainConfig tc;
  tc.epochs = 3;
  tc.lr = 1e12;
  tc.optimizer = OptimizerKind::kSgd;
  try {
    train(model, ObjectiveConfig{}, CounterfactualConfig{}, tc, toy.data);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("embed.interaction"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = test::temp_dir("ckpt");
  ModelDims dims{7, 4, 2, 5};
  TipsModel model(dims, Mode::kTips, "attention");
  ParamRegistry params;
  Rng rng(1);
  model.register_params(params, rng, false);
  params.set_trainable("time.b2", false);
  CheckpointManifest m;
  m.train_hash = "abc";
  m.mode = "tips";
  m.backbone = "attention";
  m.dims = dims;
  m.gaps = GapNormalizer(0.5, 9.0, 0.5);
  m.best_epoch = 3;
  m.best_val_hr10 = 0.25;
  save_checkpoint(dir, params, m);
  const Checkpoint cp = load_checkpoint(dir);
  EXPECT_EQ(cp.manifest.train_hash, "abc");
  EXPECT_EQ(cp.manifest.dims.dim, 4u);
  EXPECT_EQ(cp.manifest.gaps.log_max(), 9.0);
  EXPECT_EQ(cp.manifest.best_epoch, 3u);
  ASSERT_EQ(cp.params.names(), params.names());
  for (const auto& [name, p] : params.items()) {
    EXPECT_EQ(cp.params.value(name), p.value);
    EXPECT_EQ(cp.params.at(name).trainable, p.trainable);
  }
  std::filesystem::resize_file(dir / "params.bin", 16);
  EXPECT_THROW(load_checkpoint(dir), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing"), DataError);
}
