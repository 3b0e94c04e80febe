#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmtrack/diff/tape.hpp"

namespace mmtrack::diff {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-3;
  /// 0 checks every entry; otherwise a seeded sample of this many entries per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t sample_seed = 0;
  bool corrupt_backward = false;
};

struct ParamCheck {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  /// Entries whose +h or -h forward took a different relu/abs/max branch than the base point.
  std::size_t kink_crossings = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  /// Distance of the base point from the nearest relu/abs/max kink.
  double kink_margin = 0.0;
  /// Crossed entries have no valid central difference; any crossing fails the check.
  std::size_t kink_crossings = 0;
  bool passed = false;
};

/// The forward closure records onto the tape it is given and returns a scalar.
using ForwardFn = std::function<Var(Tape&)>;

/// Compares analytic gradients with central finite differences.
GradCheckReport grad_check(const ForwardFn& forward, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace mmtrack::diff
