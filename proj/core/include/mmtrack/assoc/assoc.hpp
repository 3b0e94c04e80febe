#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mmtrack::assoc {

/// Scores of one two-frame window. Detection order: N previous, then M current.
/// Variable layout Y = [true (N+M), link (N*M, row-major), start (M), end (N)].
struct FlowProblem {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> theta_true;
  std::vector<double> theta_link;
  std::vector<double> theta_start;
  std::vector<double> theta_end;

  static FlowProblem zeros(std::size_t n, std::size_t m);
  std::size_t variable_count() const noexcept { return 2 * (n + m) + n * m; }
  /// Throws DimensionError on size mismatch, ContractError on non-finite scores.
  void validate() const;
  /// Theta in the variable layout.
  std::vector<double> flattened() const;
};

struct AssignmentSolution {
  std::vector<int> y_true;
  std::vector<int> y_link;
  std::vector<int> y_start;
  std::vector<int> y_end;
  double objective = 0.0;

  std::vector<int> flattened() const;
  int link(std::size_t j, std::size_t k, std::size_t m) const { return y_link[j * m + k]; }
};

/// Sparse rows over the flattened variables; row j (< N) is the previous detection j,
/// row N + k the current detection k. Every feasible Y has C Y = 0.
struct ConstraintMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::pair<std::size_t, int>>> entries;

  std::vector<long> multiply(std::span<const int> y) const;
};

ConstraintMatrix build_constraints(std::size_t n, std::size_t m);

/// C Y = 0, binary entries, link row and column sums at most one.
bool is_feasible(const FlowProblem& problem, const AssignmentSolution& solution);
double objective(const FlowProblem& problem, const AssignmentSolution& solution);

inline constexpr double kDefaultConfidenceGate = 0.2;
inline constexpr double kGatedScore = -1.0;

/// theta_true[i] = -1 where conf_probs[i] < threshold.
FlowProblem apply_confidence_gate(FlowProblem problem, std::span<const double> conf_probs,
                                  double threshold = kDefaultConfidenceGate);

inline constexpr std::size_t kBruteForceLimit = 4;

/// Exhaustive maximisation; ties go to the lexicographically smallest Y. N, M <= 4.
AssignmentSolution solve_brute_force(const FlowProblem& problem);

/// Exact maximisation for any size via an (N+M)-square assignment problem. A detection
/// left unmatched is kept (with its start or end variable) only if that strictly gains.
AssignmentSolution solve_exact(const FlowProblem& problem);

/// Minimum-cost perfect assignment on a dense size x size matrix (row-major), O(size^3).
/// Returns the column assigned to each row.
std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t size);

/// JSON instance document {"n","m","theta_true","theta_link","theta_start","theta_end"}.
std::string problem_to_json(const FlowProblem& problem);
FlowProblem problem_from_json(const std::string& text);

}  // namespace mmtrack::assoc
