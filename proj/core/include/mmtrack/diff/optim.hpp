#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mmtrack/diff/tape.hpp"

namespace mmtrack::diff {

struct AdamConfig {
  double learning_rate = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by position in the parameter list,
/// so the same list (same order, same shapes) must be passed on every step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update and zeroes the gradients.
  void step(std::span<Parameter* const> params);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

void zero_grads(std::span<Parameter* const> params);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace mmtrack::diff
