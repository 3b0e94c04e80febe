#include "mmtrack/diff/optim.hpp"

#include <cmath>

#include "mmtrack/errors.hpp"

namespace mmtrack::diff {

void Adam::step(std::span<Parameter* const> params) {
  if (first_moment_.empty() && step_ == 0) {
    for (const Parameter* p : params) {
      first_moment_.emplace_back(p->value.shape(), 0.0);
      second_moment_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (params.size() != first_moment_.size()) {
    throw ContractError("adam: parameter list changed size between steps (" + std::to_string(first_moment_.size()) +
                        " -> " + std::to_string(params.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.value.shape() != first_moment_[i].shape() || p.grad.shape() != p.value.shape()) {
      throw ContractError("adam: shape drift for parameter '" + p.name + "'");
    }
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto m = first_moment_[i].values();
    auto v = second_moment_[i].values();
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    p.zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

}  // namespace mmtrack::diff
