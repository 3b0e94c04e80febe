#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "mmtrack/assoc/assoc.hpp"
#include "mmtrack/errors.hpp"

using namespace mmtrack;
using namespace mmtrack::assoc;

namespace {

FlowProblem random_problem(std::mt19937_64& rng, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size(0, max_size);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  FlowProblem p = FlowProblem::zeros(size(rng), size(rng));
  for (auto* v : {&p.theta_true, &p.theta_link, &p.theta_start, &p.theta_end})
    for (auto& x : *v) x = score(rng);
  return p;
}

}  // namespace

TEST_CASE("variable layout and constraint rows") {
  const auto p = FlowProblem::zeros(2, 3);
  CHECK(p.variable_count() == 2 * 5 + 6);
  const auto c = build_constraints(2, 3);
  CHECK(c.rows == 5);
  CHECK(c.cols == p.variable_count());

  // prev 0 -> cur 1, prev 1 ends, cur 0 starts, cur 2 unused.
  AssignmentSolution s;
  s.y_true = {1, 1, 1, 1, 0};
  s.y_link = {0, 1, 0, 0, 0, 0};
  s.y_start = {1, 0, 0};
  s.y_end = {0, 1};
  CHECK(is_feasible(p, s));
  for (long v : c.multiply(s.flattened())) CHECK(v == 0);

  s.y_end = {0, 0};
  CHECK_FALSE(is_feasible(p, s));
  s.y_end = {0, 1};
  s.y_link = {0, 1, 0, 0, 1, 0};  // cur 1 linked twice
  s.y_true = {1, 1, 1, 1, 0};
  CHECK_FALSE(is_feasible(p, s));
}

TEST_CASE("hand-solved window") {
  FlowProblem p = FlowProblem::zeros(2, 2);
  p.theta_true = {0.5, 0.5, 0.5, 0.5};
  p.theta_link = {0.9, -0.2, -0.3, 0.8};
  p.theta_start = {-0.9, -0.9};
  p.theta_end = {-0.9, -0.9};
  for (const auto& s : {solve_brute_force(p), solve_exact(p)}) {
    CHECK(s.y_link == std::vector<int>{1, 0, 0, 1});
    CHECK(s.y_true == std::vector<int>{1, 1, 1, 1});
    CHECK(s.objective == doctest::Approx(2.0 + 0.9 + 0.8));
  }
}

TEST_CASE("gated detections are never selected when nothing compensates") {
  FlowProblem p = FlowProblem::zeros(1, 1);
  p.theta_true = {0.9, 0.9};
  p.theta_link = {0.5};
  p.theta_start = {0.0};
  p.theta_end = {0.0};
  const double probs[] = {0.9, 0.1};
  const auto gated = apply_confidence_gate(p, probs);
  CHECK(gated.theta_true[0] == 0.9);
  CHECK(gated.theta_true[1] == kGatedScore);
  const auto s = solve_exact(gated);
  CHECK(s.y_true[1] == 0);
  CHECK(s.y_link[0] == 0);
  CHECK(s.y_end[0] == 1);
  const double wrong[] = {0.5};
  CHECK_THROWS_AS(apply_confidence_gate(p, wrong), DimensionError);
}

TEST_CASE("exact solver matches brute force on random windows") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 400; ++i) {
    const auto p = random_problem(rng, kBruteForceLimit);
    const auto bf = solve_brute_force(p);
    const auto ex = solve_exact(p);
    CHECK(std::abs(bf.objective - ex.objective) <= 1e-9);
    CHECK(is_feasible(p, ex));
    CHECK(ex.objective == doctest::Approx(objective(p, ex)));
  }
}

TEST_CASE("exact solver handles windows beyond the brute-force limit") {
  std::mt19937_64 rng(5);
  FlowProblem p = FlowProblem::zeros(12, 15);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  for (auto* v : {&p.theta_true, &p.theta_link, &p.theta_start, &p.theta_end})
    for (auto& x : *v) x = score(rng);
  const auto s = solve_exact(p);
  CHECK(is_feasible(p, s));
  CHECK_THROWS_AS(solve_brute_force(p), ContractError);

  // Any single improving move would contradict optimality; check dropping each link.
  for (std::size_t j = 0; j < p.n; ++j) {
    for (std::size_t k = 0; k < p.m; ++k) {
      if (!s.link(j, k, p.m)) continue;
      AssignmentSolution alt = s;
      alt.y_link[j * p.m + k] = 0;
      alt.y_true[j] = alt.y_true[p.n + k] = 0;
      CHECK(objective(p, alt) <= s.objective + 1e-12);
    }
  }
}

TEST_CASE("empty windows") {
  const auto p = FlowProblem::zeros(0, 0);
  const auto s = solve_exact(p);
  CHECK(s.objective == 0.0);
  CHECK(s.flattened().empty());
  FlowProblem only_cur = FlowProblem::zeros(0, 2);
  only_cur.theta_true = {0.3, -0.5};
  only_cur.theta_start = {0.1, 0.1};
  const auto t = solve_exact(only_cur);
  CHECK(t.y_start == std::vector<int>{1, 0});
  CHECK(solve_brute_force(only_cur).flattened() == t.flattened());
}

TEST_CASE("problem validation") {
  FlowProblem p = FlowProblem::zeros(1, 1);
  p.theta_link.clear();
  CHECK_THROWS_AS(p.validate(), DimensionError);
  p = FlowProblem::zeros(1, 1);
  p.theta_end[0] = NAN;
  CHECK_THROWS_AS(solve_exact(p), ContractError);
}

TEST_CASE("min-cost assignment on a known matrix") {
  const std::vector<double> cost = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto a = min_cost_assignment(cost, 3);
  double total = 0.0;
  for (std::size_t r = 0; r < 3; ++r) total += cost[r * 3 + a[r]];
  CHECK(total == 5.0);
}

TEST_CASE("instance JSON round-trip") {
  std::mt19937_64 rng(9);
  const auto p = random_problem(rng, 4);
  const auto back = problem_from_json(problem_to_json(p));
  CHECK(back.n == p.n);
  CHECK(back.theta_link == p.theta_link);
  CHECK(back.theta_true == p.theta_true);
  CHECK_THROWS_AS(problem_from_json("{\"n\": 1}"), ParseError);
}

TEST_CASE("30 x 30 window solves well under 50 ms") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  FlowProblem p = FlowProblem::zeros(30, 30);
  for (auto* v : {&p.theta_true, &p.theta_link, &p.theta_start, &p.theta_end})
    for (auto& x : *v) x = score(rng);
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = solve_exact(p);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  CHECK(is_feasible(p, s));
  CHECK(ms < 50.0);
}
