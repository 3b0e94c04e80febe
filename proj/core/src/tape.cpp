#include "mmtrack/diff/tape.hpp"

#include <algorithm>
#include <cmath>

#include "mmtrack/errors.hpp"

namespace mmtrack::diff {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape(), 0.0) {}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
  Node node;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("operands recorded on different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::note_kink(double distance) {
  kink_margin_ = std::min(kink_margin_, std::abs(distance));
  kink_signature_ = (kink_signature_ ^ (distance > 0 ? 0x9eu : 0x3du)) * 1099511628211ull;
}

void Tape::backward(const Var& output) {
  if (&output.tape() != this) throw ContractError("backward output belongs to another tape");
  if (output.value().size() != 1) {
    throw ContractError("backward requires a scalar output, got shape " + output.value().shape_string());
  }
  if (backward_done_) throw ContractError("backward already ran on this tape");
  backward_done_ = true;

  const std::size_t last = output.id();
  for (std::size_t i = 0; i <= last; ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad = Tensor(value(i).shape(), 0.0);
  }
  if (!nodes_[last].requires_grad) return;
  nodes_[last].grad[0] = options_.corrupt_backward ? 1.01 : 1.0;

  std::vector<Tensor*> input_grads;
  for (std::size_t i = last + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad) continue;
    if (node.param != nullptr) {
      auto dst = node.param->grad.values();
      const auto src = node.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      continue;
    }
    if (!node.backward) continue;
    input_grads.clear();
    for (auto in : node.inputs) input_grads.push_back(nodes_[in].requires_grad ? &nodes_[in].grad : nullptr);
    node.backward(node.grad, input_grads);
  }
}

}  // namespace mmtrack::diff
