#include <benchmark/benchmark.h>

#include <random>

#include "mmtrack/adjacency/adjacency.hpp"
#include "mmtrack/diff/optim.hpp"
#include "mmtrack/ingest/synthetic.hpp"
#include "mmtrack/tracker/model.hpp"

using namespace mmtrack;

namespace {

void BM_ScoreSlice(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(1);
  auto w = adjacency::EstimatorWeights::make(dim, rng);
  const auto features = diff::uniform_init({dim, 2 * n}, 1, rng);
  for (auto _ : state) {
    diff::Tape t;
    benchmark::DoNotOptimize(adjacency::score_slice(t.constant(features), features::Modality::Fused, n, n, w, {}));
  }
}
BENCHMARK(BM_ScoreSlice)->Args({64, 6})->Args({64, 20})->Args({512, 6})->Unit(benchmark::kMicrosecond);

// One training step's worth of work: forward over all slices and backward.
void BM_WindowForwardBackward(benchmark::State& state) {
  ingest::ScenarioConfig cfg;
  cfg.frames = 2;
  cfg.objects = static_cast<int>(state.range(0));
  const auto seq = ingest::generate_synthetic(cfg);
  tracker::ModelConfig mc;
  const auto frames = tracker::prepare_sequence(seq, mc);
  tracker::Model model(mc, 0);
  const features::Modality mods[] = {features::Modality::Image, features::Modality::Cloud};
  for (auto _ : state) {
    diff::Tape t;
    const auto scores = model.forward(t, mods, frames[0], frames[1]);
    diff::Var total = diff::sum(scores.slices[0].conf);
    for (const auto& s : scores.slices) total = diff::add(total, diff::sum(s.link));
    t.backward(total);
    benchmark::DoNotOptimize(total.value());
  }
}
BENCHMARK(BM_WindowForwardBackward)->Arg(6)->Arg(20)->Unit(benchmark::kMicrosecond);

}  // namespace
