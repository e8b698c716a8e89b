#include <benchmark/benchmark.h>

#include <random>

#include "rewardkit/core_model.hpp"
#include "rewardkit/eval.hpp"
#include "rewardkit/ingestion.hpp"
#include "rewardkit/templates.hpp"

using namespace rewardkit;

namespace {

void BM_Mae(benchmark::State& state) {
  std::mt19937 rng(3);
  std::vector<ScorePair> pairs(state.range(0));
  for (auto& p : pairs) p = {1 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 5)};
  for (auto _ : state) benchmark::DoNotOptimize(mae(pairs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Mae)->Arg(1000)->Arg(100000);

void BM_ParsePrediction(benchmark::State& state) {
  const std::string replies[] = {
      "The robot grasps the cup but never places it on the shelf.\nSCORE: 3",
      "I would rate this 4 out of 5 given the final frame.",
      "No discernible progress toward the goal.",
  };
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(parse_prediction(replies[i++ % 3]));
}
BENCHMARK(BM_ParsePrediction);

void BM_AggregateTable(benchmark::State& state) {
  const auto per_model = read_subset_results_csv(REWARDKIT_BENCH_FIXTURE);
  const auto order = subset_order_of_csv(REWARDKIT_BENCH_FIXTURE);
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(per_model, order));
}
BENCHMARK(BM_AggregateTable);

void BM_BuildSplits(benchmark::State& state) {
  std::vector<Episode> eps;
  for (int i = 0; i < state.range(0); ++i) {
    Episode e;
    e.id = "src/" + std::to_string(i);
    e.source_dataset = "Synthetic";
    e.video_ref = "v/" + std::to_string(i);
    e.task_text = "Task " + std::to_string(i % (state.range(0) / 4 + 1));
    e.score = 1 + i % 5;
    eps.push_back(std::move(e));
  }
  for (auto _ : state) benchmark::DoNotOptimize(build_splits(eps, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildSplits)->Arg(1000)->Arg(54135)->Unit(benchmark::kMillisecond);

void BM_RenderValidation(benchmark::State& state) {
  const auto templates = TemplateSet::builtin();
  const auto& tmpl = templates.get(Stage::kValidation);
  Bindings b;
  for (const auto& name : tmpl.placeholders()) b[name] = "put the spoon in the drawer";
  for (auto _ : state) benchmark::DoNotOptimize(render(tmpl, b));
}
BENCHMARK(BM_RenderValidation);

}  // namespace

BENCHMARK_MAIN();
