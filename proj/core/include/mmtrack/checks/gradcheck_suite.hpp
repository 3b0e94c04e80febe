#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mmtrack::checks {

struct SuiteOptions {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// A seed is redrawn while some probed entry crosses a relu/abs/max kink within +-step.
  std::size_t max_redraws = 200;
  /// Parameters larger than this are checked on a seeded sample of this many entries.
  std::size_t entries_per_param = 24;
  bool corrupt_backward = false;
  /// Restricts the run to items whose name starts with one of these prefixes.
  std::vector<std::string> only;
};

struct ItemResult {
  std::string name;
  std::size_t seeds_run = 0;
  std::size_t seeds_passed = 0;
  std::size_t redraws = 0;
  /// Crossings left in the final draw of seeds that exhausted their redraws.
  std::size_t unresolved_crossings = 0;
  double worst_error = 0.0;
  std::string worst_param;
  double seconds = 0.0;
  bool passed = false;
};

/// Every op, encoder, fusion variant, estimator head, ranking combiner, the loss and the
/// assembled model.
std::vector<std::string> gradcheck_item_names();
std::vector<ItemResult> run_gradcheck_suite(const SuiteOptions& options = {});

}  // namespace mmtrack::checks
