#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmtrack/diff/tensor.hpp"

namespace mmtrack::diff {

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward; zero-sized before.
  const Tensor& grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the upstream gradient and accumulates into the inputs' gradients.
/// Entries of `input_grads` are null for inputs that do not require a gradient.
using BackwardFn = std::function<void(const Tensor& upstream, std::vector<Tensor*>& input_grads)>;

struct TapeOptions {
  /// Scales the backward seed so every analytic gradient is off by 1%.
  /// Negative control for gradient checking only.
  bool corrupt_backward = false;
};

/// Append-only record of executed operations. Single-threaded; one backward per forward.
class Tape {
 public:
  Tape() = default;
  explicit Tape(TapeOptions options) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Binds a parameter; binding the same parameter twice returns the same node.
  Var param(Parameter& p);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar output, accumulating into every bound Parameter::grad.
  void backward(const Var& output);

  /// Parameter nodes read the parameter in place; it must not change while the tape lives.
  const Tensor& value(std::size_t id) const { return nodes_[id].param ? nodes_[id].param->value : nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Called by relu/abs/max with the signed distance to their kink.
  void note_kink(double distance);
  /// Smallest distance to a non-differentiable point seen so far.
  double kink_margin() const noexcept { return kink_margin_; }
  /// Hash of the branch taken at every kink, in recording order.
  std::uint64_t kink_signature() const noexcept { return kink_signature_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
  std::uint64_t kink_signature_ = 14695981039346656037ull;
  bool backward_done_ = false;
};

}  // namespace mmtrack::diff
