#include <benchmark/benchmark.h>

#include <spdlog/spdlog.h>

#include "tips/evaluation.hpp"
#include "tips/simulator.hpp"
#include "tips/training.hpp"

using namespace tips;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = uniform_real(rng, -1.0, 1.0);
  return t;
}

// A simulated log shared by the training and evaluation benchmarks.
struct World {
  OracleBundle bundle;
  InteractionLog log;
  TrainingData data;
  World() {
    spdlog::set_level(spdlog::level::warn);
    WorldSpec spec;
    spec.n_users = 200;
    spec.n_items = 150;
    spec.horizon = 20;
    bundle = simulate(spec, 1);
    log = bundle.biased_log();
    data = prepare_training_data(log, 20, 1.0);
  }
};

const World& world() {
  static const World w;
  return w;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor2 a = random_tensor(n, n, rng), b = random_tensor(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  ParamRegistry params;
  params.add("q", random_tensor(1, 32, rng));
  params.add("k", random_tensor(len, 32, rng));
  params.add("v", random_tensor(len, 32, rng));
  for (auto _ : state) {
    Tape tape;
    Var out = ad::attention(tape.param(params, "q"), tape.param(params, "k"),
                            tape.param(params, "v"), AttentionMask::single(len, 0),
                            1.0 / std::sqrt(32.0));
    Var loss = ad::sum(out);
    tape.backward(loss);
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(20)->Arg(50);

void BM_TrainingStep(benchmark::State& state) {
  const World& w = world();
  const Mode mode = static_cast<Mode>(state.range(0));
  TipsModel model(ModelDims{w.data.n_items, 32, 2, 20}, mode, "attention");
  ParamRegistry params;
  Rng rng(3);
  model.register_params(params, rng, false);
  BatchBuilder builder(w.data, model, CounterfactualConfig{}, 3);
  builder.refresh_similar(params, rng);
  const auto examples = enumerate_examples(w.data);
  const std::span<const TrainExample> first(examples.data(), std::min<std::size_t>(32, examples.size()));
  const Batch batch = builder.build(first, model.traits().exposure_loss, rng);
  for (auto _ : state) {
    params.zero_grad();
    Tape tape;
    const BatchLoss loss = batch_loss(tape, params, model, ObjectiveConfig{mode}, w.data, batch);
    tape.backward(loss.total);
  }
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_TrainingStep)
    ->Arg(static_cast<int>(Mode::kTips))
    ->Arg(static_cast<int>(Mode::kStaticIps))
    ->Arg(static_cast<int>(Mode::kNone))
    ->Unit(benchmark::kMillisecond);

void BM_Evaluate100Users(benchmark::State& state) {
  const World& w = world();
  TipsModel model(ModelDims{w.data.n_items, 32, 2, 20}, Mode::kTips, "attention");
  ParamRegistry params;
  Rng rng(4);
  model.register_params(params, rng, false);
  const ModelScorer scorer(model, params, w.data.gaps);
  EvalProtocol protocol;
  protocol.max_users = 100;
  const auto cases = test_cases(w.data);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(scorer, cases, w.data.n_items, protocol));
}
BENCHMARK(BM_Evaluate100Users)->Unit(benchmark::kMillisecond);

void BM_WindowedTopK(benchmark::State& state) {
  const World& w = world();
  const Timestamp t = w.data.t_max;
  for (auto _ : state) benchmark::DoNotOptimize(w.data.popularity.top_k(t, 30 * 86400, 11));
}
BENCHMARK(BM_WindowedTopK);

void BM_Simulate(benchmark::State& state) {
  WorldSpec spec;
  spec.n_users = static_cast<std::size_t>(state.range(0));
  spec.n_items = 300;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(spec, 1));
}
BENCHMARK(BM_Simulate)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
