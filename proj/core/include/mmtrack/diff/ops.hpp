#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mmtrack/diff/tape.hpp"

// Differentiable operations. Unless noted otherwise, rank-2 inputs are
// channels x columns and every op records a node on the operands' tape.
namespace mmtrack::diff {

/// Half-open column range [begin, end).
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const noexcept { return end - begin; }
};

/// Point-wise (1x1) convolution: out[o,k] = sum_i weight[o,i] * input[i,k] + bias[o].
Var linear(const Var& input, const Var& weight, const std::optional<Var>& bias = std::nullopt);

enum class ElementwiseKind { Add, Sub, Mul, Div, Abs, Relu, Sigmoid, Scale };

/// Binary kinds accept equal shapes or a one-element operand on either side.
/// Unary kinds ignore `b`; Scale multiplies by `scalar`.
Var elementwise(ElementwiseKind kind, const Var& a, const std::optional<Var>& b = std::nullopt,
                double scalar = 1.0);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var abs(const Var& a);   // subgradient 0 at 0
Var relu(const Var& a);  // subgradient 0 at 0
Var sigmoid(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
/// Elementwise maximum; ties route the gradient to `a`.
Var maximum(const Var& a, const Var& b);

/// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& input);
Var transpose(const Var& input);

/// Column j of the result is the mean of input columns in segments[j].
/// Segments must be non-empty and lie inside [0, cols).
Var segment_mean(const Var& input, std::span<const Segment> segments);

/// Rank-2 concatenation along axis 0 (channels) or 1 (columns).
Var concat(std::span<const Var> inputs, std::size_t axis);
/// Selects columns (with repetition); backward scatter-adds.
Var gather_cols(const Var& input, std::span<const std::size_t> columns);
Var slice_cols(const Var& input, std::size_t begin, std::size_t end);
Var reshape(const Var& input, Shape shape);

/// Per-column standardisation over channels: (x - mean) / sqrt(var + eps).
Var layer_norm_cols(const Var& input, double eps = 1e-5);

Var sum(const Var& input);
Var mean(const Var& input);

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0,1].
Var bce_with_logits(const Var& logits, const Tensor& targets);
/// Mean squared error against a constant target.
Var mse(const Var& prediction, const Tensor& target);

}  // namespace mmtrack::diff
