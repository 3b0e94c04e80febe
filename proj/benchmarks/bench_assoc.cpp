#include <benchmark/benchmark.h>

#include <random>

#include "mmtrack/assoc/assoc.hpp"

using namespace mmtrack::assoc;

namespace {

FlowProblem random_problem(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  FlowProblem p = FlowProblem::zeros(n, m);
  for (auto* v : {&p.theta_true, &p.theta_link, &p.theta_start, &p.theta_end})
    for (auto& x : *v) x = score(rng);
  return p;
}

void BM_SolveExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_problem(n, n, 7);
  for (auto _ : state) benchmark::DoNotOptimize(solve_exact(p));
}
BENCHMARK(BM_SolveExact)->Arg(4)->Arg(10)->Arg(30)->Arg(60)->Unit(benchmark::kMicrosecond);

void BM_SolveBruteForce(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_problem(n, n, 8);
  for (auto _ : state) benchmark::DoNotOptimize(solve_brute_force(p));
}
BENCHMARK(BM_SolveBruteForce)->DenseRange(1, 4)->Unit(benchmark::kMicrosecond);

}  // namespace
