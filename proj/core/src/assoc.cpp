#include "mmtrack/assoc/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "mmtrack/errors.hpp"

namespace mmtrack::assoc {

namespace {

std::size_t link_offset(std::size_t n, std::size_t m) { return n + m; }
std::size_t start_offset(std::size_t n, std::size_t m) { return n + m + n * m; }
std::size_t end_offset(std::size_t n, std::size_t m) { return n + m + n * m + m; }

AssignmentSolution empty_solution(std::size_t n, std::size_t m) {
  AssignmentSolution s;
  s.y_true.assign(n + m, 0);
  s.y_link.assign(n * m, 0);
  s.y_start.assign(m, 0);
  s.y_end.assign(n, 0);
  return s;
}

}  // namespace

std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t size) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t n = size;
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

FlowProblem FlowProblem::zeros(std::size_t n, std::size_t m) {
  FlowProblem p;
  p.n = n;
  p.m = m;
  p.theta_true.assign(n + m, 0.0);
  p.theta_link.assign(n * m, 0.0);
  p.theta_start.assign(m, 0.0);
  p.theta_end.assign(n, 0.0);
  return p;
}

void FlowProblem::validate() const {
  if (theta_true.size() != n + m || theta_link.size() != n * m || theta_start.size() != m || theta_end.size() != n) {
    throw DimensionError("flow problem: score arrays do not match N=" + std::to_string(n) + ", M=" + std::to_string(m));
  }
  for (double v : flattened()) {
    if (!std::isfinite(v)) throw ContractError("flow problem: non-finite score");
  }
}

std::vector<double> FlowProblem::flattened() const {
  std::vector<double> out;
  out.reserve(variable_count());
  out.insert(out.end(), theta_true.begin(), theta_true.end());
  out.insert(out.end(), theta_link.begin(), theta_link.end());
  out.insert(out.end(), theta_start.begin(), theta_start.end());
  out.insert(out.end(), theta_end.begin(), theta_end.end());
  return out;
}

std::vector<int> AssignmentSolution::flattened() const {
  std::vector<int> out;
  out.insert(out.end(), y_true.begin(), y_true.end());
  out.insert(out.end(), y_link.begin(), y_link.end());
  out.insert(out.end(), y_start.begin(), y_start.end());
  out.insert(out.end(), y_end.begin(), y_end.end());
  return out;
}

std::vector<long> ConstraintMatrix::multiply(std::span<const int> y) const {
  if (y.size() != cols) throw DimensionError("constraint multiply: vector has wrong length");
  std::vector<long> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& [c, coef] : entries[r]) out[r] += static_cast<long>(coef) * y[c];
  }
  return out;
}

ConstraintMatrix build_constraints(std::size_t n, std::size_t m) {
  ConstraintMatrix c;
  c.rows = n + m;
  c.cols = 2 * (n + m) + n * m;
  c.entries.resize(c.rows);
  for (std::size_t j = 0; j < n; ++j) {
    auto& row = c.entries[j];
    row.emplace_back(j, 1);
    for (std::size_t k = 0; k < m; ++k) row.emplace_back(link_offset(n, m) + j * m + k, -1);
    row.emplace_back(end_offset(n, m) + j, -1);
  }
  for (std::size_t k = 0; k < m; ++k) {
    auto& row = c.entries[n + k];
    row.emplace_back(n + k, 1);
    for (std::size_t j = 0; j < n; ++j) row.emplace_back(link_offset(n, m) + j * m + k, -1);
    row.emplace_back(start_offset(n, m) + k, -1);
  }
  return c;
}

bool is_feasible(const FlowProblem& problem, const AssignmentSolution& s) {
  const std::size_t n = problem.n, m = problem.m;
  if (s.y_true.size() != n + m || s.y_link.size() != n * m || s.y_start.size() != m || s.y_end.size() != n) {
    return false;
  }
  const auto y = s.flattened();
  for (int v : y) {
    if (v != 0 && v != 1) return false;
  }
  for (long r : build_constraints(n, m).multiply(y)) {
    if (r != 0) return false;
  }
  for (std::size_t j = 0; j < n; ++j) {
    int sum = 0;
    for (std::size_t k = 0; k < m; ++k) sum += s.y_link[j * m + k];
    if (sum > 1) return false;
  }
  for (std::size_t k = 0; k < m; ++k) {
    int sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += s.y_link[j * m + k];
    if (sum > 1) return false;
  }
  return true;
}

double objective(const FlowProblem& problem, const AssignmentSolution& solution) {
  const auto theta = problem.flattened();
  const auto y = solution.flattened();
  if (theta.size() != y.size()) throw DimensionError("objective: solution does not fit problem");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i]) total += theta[i];
  }
  return total;
}

FlowProblem apply_confidence_gate(FlowProblem problem, std::span<const double> conf_probs, double threshold) {
  if (conf_probs.size() != problem.theta_true.size()) {
    throw DimensionError("confidence gate: " + std::to_string(conf_probs.size()) + " probabilities for " +
                         std::to_string(problem.theta_true.size()) + " detections");
  }
  for (std::size_t i = 0; i < conf_probs.size(); ++i) {
    if (conf_probs[i] < threshold) problem.theta_true[i] = kGatedScore;
  }
  return problem;
}

AssignmentSolution solve_brute_force(const FlowProblem& problem) {
  problem.validate();
  const std::size_t n = problem.n, m = problem.m;
  if (n > kBruteForceLimit || m > kBruteForceLimit) {
    throw ContractError("solve_brute_force: N and M must be at most " + std::to_string(kBruteForceLimit));
  }
  constexpr double kTieTolerance = 1e-12;
  AssignmentSolution best;
  std::vector<int> best_flat;
  bool have_best = false;

  std::vector<int> match(n, -1);  // previous j -> current k
  std::vector<bool> taken(m, false);

  auto consider_matching = [&]() {
    std::vector<std::size_t> free_vars;  // detection indices in [0, n+m)
    for (std::size_t j = 0; j < n; ++j)
      if (match[j] < 0) free_vars.push_back(j);
    for (std::size_t k = 0; k < m; ++k)
      if (!taken[k]) free_vars.push_back(n + k);
    const std::size_t combos = std::size_t{1} << free_vars.size();
    for (std::size_t mask = 0; mask < combos; ++mask) {
      AssignmentSolution s = empty_solution(n, m);
      for (std::size_t j = 0; j < n; ++j) {
        if (match[j] < 0) continue;
        const auto k = static_cast<std::size_t>(match[j]);
        s.y_link[j * m + k] = 1;
        s.y_true[j] = 1;
        s.y_true[n + k] = 1;
      }
      for (std::size_t b = 0; b < free_vars.size(); ++b) {
        if (!(mask >> b & 1)) continue;
        const std::size_t d = free_vars[b];
        s.y_true[d] = 1;
        if (d < n) {
          s.y_end[d] = 1;
        } else {
          s.y_start[d - n] = 1;
        }
      }
      s.objective = objective(problem, s);
      auto flat = s.flattened();
      const bool better = !have_best || s.objective > best.objective + kTieTolerance ||
                          (std::abs(s.objective - best.objective) <= kTieTolerance && flat < best_flat);
      if (better) {
        best = std::move(s);
        best_flat = std::move(flat);
        have_best = true;
      }
    }
  };

  auto recurse = [&](auto&& self, std::size_t j) -> void {
    if (j == n) {
      consider_matching();
      return;
    }
    match[j] = -1;
    self(self, j + 1);
    for (std::size_t k = 0; k < m; ++k) {
      if (taken[k]) continue;
      taken[k] = true;
      match[j] = static_cast<int>(k);
      self(self, j + 1);
      match[j] = -1;
      taken[k] = false;
    }
  };
  recurse(recurse, 0);
  return best;
}

AssignmentSolution solve_exact(const FlowProblem& problem) {
  problem.validate();
  const std::size_t n = problem.n, m = problem.m;
  AssignmentSolution s = empty_solution(n, m);
  if (n + m == 0) return s;

  // Value of a detection left out of every link: keep it as an end/start only if that gains.
  std::vector<double> keep_prev(n), keep_cur(m);
  for (std::size_t j = 0; j < n; ++j) keep_prev[j] = std::max(0.0, problem.theta_true[j] + problem.theta_end[j]);
  for (std::size_t k = 0; k < m; ++k)
    keep_cur[k] = std::max(0.0, problem.theta_true[n + k] + problem.theta_start[k]);

  // Rows: N previous then M dummies. Columns: M current then N dummies.
  const std::size_t size = n + m;
  std::vector<double> cost(size * size, 0.0);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      double gain = 0.0;
      if (r < n && c < m) {
        gain = problem.theta_true[r] + problem.theta_true[n + c] + problem.theta_link[r * m + c];
      } else if (r < n) {
        gain = keep_prev[r];
      } else if (c < m) {
        gain = keep_cur[c];
      }
      cost[r * size + c] = -gain;
    }
  }
  const auto assignment = min_cost_assignment(cost, size);

  std::vector<bool> cur_linked(m, false);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t c = assignment[j];
    const double leave = keep_prev[j] + (c < m ? keep_cur[c] : 0.0);
    if (c < m && cost[j * size + c] < -leave) {
      s.y_link[j * m + c] = 1;
      s.y_true[j] = 1;
      s.y_true[n + c] = 1;
      cur_linked[c] = true;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    bool linked = false;
    for (std::size_t k = 0; k < m; ++k) linked = linked || s.y_link[j * m + k];
    if (!linked && problem.theta_true[j] + problem.theta_end[j] > 0.0) {
      s.y_true[j] = 1;
      s.y_end[j] = 1;
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (!cur_linked[k] && problem.theta_true[n + k] + problem.theta_start[k] > 0.0) {
      s.y_true[n + k] = 1;
      s.y_start[k] = 1;
    }
  }
  s.objective = objective(problem, s);
  return s;
}

std::string problem_to_json(const FlowProblem& problem) {
  nlohmann::json j;
  j["n"] = problem.n;
  j["m"] = problem.m;
  j["theta_true"] = problem.theta_true;
  j["theta_link"] = problem.theta_link;
  j["theta_start"] = problem.theta_start;
  j["theta_end"] = problem.theta_end;
  return j.dump(2) + "\n";
}

FlowProblem problem_from_json(const std::string& text) {
  FlowProblem p;
  try {
    const auto j = nlohmann::json::parse(text);
    p.n = j.at("n").get<std::size_t>();
    p.m = j.at("m").get<std::size_t>();
    p.theta_true = j.at("theta_true").get<std::vector<double>>();
    p.theta_link = j.at("theta_link").get<std::vector<double>>();
    p.theta_start = j.at("theta_start").get<std::vector<double>>();
    p.theta_end = j.at("theta_end").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("flow instance: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace mmtrack::assoc
