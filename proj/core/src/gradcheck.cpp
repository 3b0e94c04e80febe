#include "mmtrack/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

namespace mmtrack::diff {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const ForwardFn& forward) {
  Tape tape;
  Var out = forward(tape);
  if (out.value().size() != 1) throw ContractError("grad_check: forward must return a scalar");
  return {out.value()[0], tape.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const ForwardFn& forward, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  zero_grads(params);
  GradCheckReport report;
  std::uint64_t signature = 0;
  {
    Tape tape(TapeOptions{options.corrupt_backward});
    Var out = forward(tape);
    tape.backward(out);
    report.kink_margin = tape.kink_margin();
    signature = tape.kink_signature();
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);
  zero_grads(params);

  std::mt19937_64 rng(options.sample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    std::vector<std::size_t> entries(p.value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_param > 0 && entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    ParamCheck check{p.name, entries.size(), 0.0, 0};
    for (std::size_t e : entries) {
      const double original = p.value[e];
      p.value[e] = original + options.step;
      const Evaluation plus = evaluate(forward);
      p.value[e] = original - options.step;
      const Evaluation minus = evaluate(forward);
      p.value[e] = original;
      if (plus.signature != signature || minus.signature != signature) {
        ++check.kink_crossings;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      check.max_rel_error =
          std::max(check.max_rel_error, relative_error(analytic[pi][e], numeric, options.denominator_floor));
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.kink_crossings += check.kink_crossings;
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < options.tolerance && report.kink_crossings == 0;
  return report;
}

}  // namespace mmtrack::diff
