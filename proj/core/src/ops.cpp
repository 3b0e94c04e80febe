#include "mmtrack/diff/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mmtrack/errors.hpp"

namespace mmtrack::diff {
namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_string());
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  auto d = dst->values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class BinaryKind { Add, Sub, Mul, Div };

// Binary op with one-element broadcast on either side.
Var binary(BinaryKind kind, const Var& a, const Var& b, const char* name) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw DimensionError(std::string(name) + ": shape mismatch " + av.shape_string() + " vs " +
                         bv.shape_string());
  }
  const Shape out_shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = element_count(out_shape);
  auto ai = [a_scalar](std::size_t i) { return a_scalar ? 0 : i; };
  auto bi = [b_scalar](std::size_t i) { return b_scalar ? 0 : i; };

  Tensor out(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[ai(i)];
    const double y = bv[bi(i)];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
      case BinaryKind::Div: out[i] = x / y; break;
    }
  }

  Tape* tape = &a.tape();
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return tape->record(std::move(out), {a, b},
                         [=](const Tensor& g, std::vector<Tensor*>& grads) {
                           const Tensor& a_saved = tape->value(a_id);
                           const Tensor& b_saved = tape->value(b_id);
                           Tensor* ga = grads[0];
                           Tensor* gb = grads[1];
                           for (std::size_t i = 0; i < n; ++i) {
                             const double x = a_saved[ai(i)];
                             const double y = b_saved[bi(i)];
                             double dx = 0.0;
                             double dy = 0.0;
                             switch (kind) {
                               case BinaryKind::Add: dx = g[i]; dy = g[i]; break;
                               case BinaryKind::Sub: dx = g[i]; dy = -g[i]; break;
                               case BinaryKind::Mul: dx = g[i] * y; dy = g[i] * x; break;
                               case BinaryKind::Div: dx = g[i] / y; dy = -g[i] * x / (y * y); break;
                             }
                             if (ga) (*ga)[ai(i)] += dx;
                             if (gb) (*gb)[bi(i)] += dy;
                           }
                         });
}

}  // namespace

Var linear(const Var& input, const Var& weight, const std::optional<Var>& bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t d_in = x.rows();
  const std::size_t k_cols = x.cols();
  const std::size_t d_out = w.rows();
  if (w.cols() != d_in) {
    throw DimensionError("linear: weight " + w.shape_string() + " incompatible with input " + x.shape_string());
  }
  if (bias && bias->value().size() != d_out) {
    throw DimensionError("linear: bias " + bias->value().shape_string() + " incompatible with weight " +
                         w.shape_string());
  }

  Tensor out({d_out, k_cols});
  for (std::size_t o = 0; o < d_out; ++o) {
    double* row = &out[o * k_cols];
    if (bias) {
      const double b = bias->value()[o];
      for (std::size_t k = 0; k < k_cols; ++k) row[k] = b;
    }
    const double* wr = &w[o * d_in];
    if (k_cols == 1) {
      // Same summation order as the general path, so a column's result never depends on
      // how many other columns share the batch.
      double acc = row[0];
      for (std::size_t i = 0; i < d_in; ++i) acc += wr[i] * x[i];
      row[0] = acc;
      continue;
    }
    for (std::size_t i = 0; i < d_in; ++i) {
      const double wi = wr[i];
      const double* xr = &x[i * k_cols];
      for (std::size_t k = 0; k < k_cols; ++k) row[k] += wi * xr[k];
    }
  }

  std::vector<Var> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  // Tape values are immutable once recorded, so the backward pass reads them in place.
  Tape* tape = &input.tape();
  const std::size_t x_id = input.id();
  const std::size_t w_id = weight.id();
  return tape->record(
      std::move(out), std::move(inputs), [=](const Tensor& g, std::vector<Tensor*>& grads) {
        const Tensor& x_saved = tape->value(x_id);
        const Tensor& w_saved = tape->value(w_id);
        if (Tensor* gx = grads[0]) {
          for (std::size_t o = 0; o < d_out; ++o) {
            const double* gr = &g[o * k_cols];
            for (std::size_t i = 0; i < d_in; ++i) {
              const double wi = w_saved[o * d_in + i];
              double* gxr = &(*gx)[i * k_cols];
              for (std::size_t k = 0; k < k_cols; ++k) gxr[k] += wi * gr[k];
            }
          }
        }
        if (Tensor* gw = grads[1]) {
          for (std::size_t o = 0; o < d_out; ++o) {
            const double* gr = &g[o * k_cols];
            for (std::size_t i = 0; i < d_in; ++i) {
              const double* xr = &x_saved[i * k_cols];
              double acc = 0.0;
              for (std::size_t k = 0; k < k_cols; ++k) acc += gr[k] * xr[k];
              (*gw)[o * d_in + i] += acc;
            }
          }
        }
        if (grads.size() > 2 && grads[2] != nullptr) {
          Tensor& gb = *grads[2];
          for (std::size_t o = 0; o < d_out; ++o) {
            double acc = 0.0;
            for (std::size_t k = 0; k < k_cols; ++k) acc += g[o * k_cols + k];
            gb[o] += acc;
          }
        }
      });
}

Var add(const Var& a, const Var& b) { return binary(BinaryKind::Add, a, b, "add"); }
Var sub(const Var& a, const Var& b) { return binary(BinaryKind::Sub, a, b, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(BinaryKind::Mul, a, b, "mul"); }
Var div(const Var& a, const Var& b) { return binary(BinaryKind::Div, a, b, "div"); }

Var abs(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::abs(x[i]);
    a.tape().note_kink(x[i]);
  }
  Tensor saved = x;
  return a.tape().record(std::move(out), {a}, [saved](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (std::size_t i = 0; i < saved.size(); ++i) {
      if (saved[i] > 0) ga[i] += g[i];
      else if (saved[i] < 0) ga[i] -= g[i];
    }
  });
}

Var relu(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0 ? x[i] : 0.0;
    a.tape().note_kink(x[i]);
  }
  Tensor saved = x;
  return a.tape().record(std::move(out), {a}, [saved](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (std::size_t i = 0; i < saved.size(); ++i) {
      if (saved[i] > 0) ga[i] += g[i];
    }
  });
}

Var sigmoid(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  Tensor saved = out;
  return a.tape().record(std::move(out), {a}, [saved](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (std::size_t i = 0; i < saved.size(); ++i) ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
  });
}

Var scale(const Var& a, double factor) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return a.tape().record(std::move(out), {a}, [factor](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var add_scalar(const Var& a, double offset) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + offset;
  return a.tape().record(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    accumulate(grads[0], g);
  });
}

Var maximum(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    throw DimensionError("maximum: shape mismatch " + x.shape_string() + " vs " + y.shape_string());
  }
  Tensor out(x.shape());
  std::vector<unsigned char> take_a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    take_a[i] = x[i] >= y[i];
    out[i] = take_a[i] ? x[i] : y[i];
    a.tape().note_kink(x[i] - y[i]);
  }
  return a.tape().record(std::move(out), {a, b}, [take_a](const Tensor& g, std::vector<Tensor*>& grads) {
    for (std::size_t i = 0; i < take_a.size(); ++i) {
      Tensor* dst = take_a[i] ? grads[0] : grads[1];
      if (dst) (*dst)[i] += g[i];
    }
  });
}

Var elementwise(ElementwiseKind kind, const Var& a, const std::optional<Var>& b, double scalar) {
  auto need_b = [&]() -> const Var& {
    if (!b) throw ContractError("elementwise: binary kind requires a second operand");
    return *b;
  };
  switch (kind) {
    case ElementwiseKind::Add: return add(a, need_b());
    case ElementwiseKind::Sub: return sub(a, need_b());
    case ElementwiseKind::Mul: return mul(a, need_b());
    case ElementwiseKind::Div: return div(a, need_b());
    case ElementwiseKind::Abs: return abs(a);
    case ElementwiseKind::Relu: return relu(a);
    case ElementwiseKind::Sigmoid: return sigmoid(a);
    case ElementwiseKind::Scale: return scale(a, scalar);
  }
  throw ContractError("elementwise: unknown kind");
}

Var softmax_rows(const Var& input) {
  const Tensor& x = input.value();
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (c == 0) throw DimensionError("softmax_rows: empty row dimension in " + x.shape_string());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &x[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor saved = out;
  return input.tape().record(std::move(out), {input}, [saved, r, c](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * saved[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += saved[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Var transpose(const Var& input) {
  const Tensor& x = input.value();
  require_rank2(x, "transpose");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return input.tape().record(std::move(out), {input}, [r, c](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Var segment_mean(const Var& input, std::span<const Segment> segments) {
  const Tensor& x = input.value();
  require_rank2(x, "segment_mean");
  const std::size_t d = x.rows();
  const std::size_t len = x.cols();
  const std::size_t n_seg = segments.size();
  for (std::size_t s = 0; s < n_seg; ++s) {
    if (segments[s].length() == 0 || segments[s].begin > segments[s].end) {
      throw DegenerateDetectionError("segment_mean: segment " + std::to_string(s) + " is empty");
    }
    if (segments[s].end > len) {
      throw DimensionError("segment_mean: segment " + std::to_string(s) + " exceeds " + std::to_string(len) +
                           " columns");
    }
  }
  Tensor out({d, n_seg});
  for (std::size_t c = 0; c < d; ++c) {
    const double* row = &x[c * len];
    for (std::size_t s = 0; s < n_seg; ++s) {
      double acc = 0.0;
      for (std::size_t k = segments[s].begin; k < segments[s].end; ++k) acc += row[k];
      out[c * n_seg + s] = acc / static_cast<double>(segments[s].length());
    }
  }
  std::vector<Segment> saved(segments.begin(), segments.end());
  return input.tape().record(std::move(out), {input},
                             [saved, d, len](const Tensor& g, std::vector<Tensor*>& grads) {
                               Tensor& gx = *grads[0];
                               const std::size_t n = saved.size();
                               for (std::size_t c = 0; c < d; ++c) {
                                 for (std::size_t s = 0; s < n; ++s) {
                                   const double share = g[c * n + s] / static_cast<double>(saved[s].length());
                                   for (std::size_t k = saved[s].begin; k < saved[s].end; ++k) gx[c * len + k] += share;
                                 }
                               }
                             });
}

Var concat(std::span<const Var> inputs, std::size_t axis) {
  if (inputs.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis " + std::to_string(axis) + " unsupported for rank-2 tensors");
  for (const auto& v : inputs) require_rank2(v.value(), "concat");
  const Tensor& first = inputs[0].value();
  const std::size_t other = axis == 0 ? first.cols() : first.rows();
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& v : inputs) {
    const Tensor& t = v.value();
    const std::size_t t_other = axis == 0 ? t.cols() : t.rows();
    if (t_other != other) {
      throw DimensionError("concat: incompatible shapes " + first.shape_string() + " and " + t.shape_string());
    }
    extents.push_back(axis == 0 ? t.rows() : t.cols());
    total += extents.back();
  }
  const Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Tensor& t = inputs[n].value();
    if (axis == 0) {
      std::copy(t.values().begin(), t.values().end(), out.values().begin() + offset * other);
    } else {
      for (std::size_t r = 0; r < other; ++r)
        for (std::size_t c = 0; c < extents[n]; ++c) out[r * total + offset + c] = t[r * extents[n] + c];
    }
    offset += extents[n];
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return inputs[0].tape().record(
      std::move(out), std::move(ins), [extents, axis, other, total](const Tensor& g, std::vector<Tensor*>& grads) {
        std::size_t offset = 0;
        for (std::size_t n = 0; n < extents.size(); ++n) {
          if (Tensor* gt = grads[n]) {
            if (axis == 0) {
              for (std::size_t i = 0; i < extents[n] * other; ++i) (*gt)[i] += g[offset * other + i];
            } else {
              for (std::size_t r = 0; r < other; ++r)
                for (std::size_t c = 0; c < extents[n]; ++c) (*gt)[r * extents[n] + c] += g[r * total + offset + c];
            }
          }
          offset += extents[n];
        }
      });
}

Var gather_cols(const Var& input, std::span<const std::size_t> columns) {
  const Tensor& x = input.value();
  require_rank2(x, "gather_cols");
  const std::size_t d = x.rows();
  const std::size_t len = x.cols();
  const std::size_t n = columns.size();
  for (auto c : columns) {
    if (c >= len) throw DimensionError("gather_cols: column " + std::to_string(c) + " out of range " + x.shape_string());
  }
  Tensor out({d, n});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * len + columns[j]];
  std::vector<std::size_t> idx(columns.begin(), columns.end());
  return input.tape().record(std::move(out), {input}, [idx, d, len](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    const std::size_t n = idx.size();
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = 0; j < n; ++j) gx[r * len + idx[j]] += g[r * n + j];
  });
}

Var slice_cols(const Var& input, std::size_t begin, std::size_t end) {
  if (begin > end) throw DimensionError("slice_cols: begin after end");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather_cols(input, idx);
}

Var reshape(const Var& input, Shape shape) {
  Tensor out = input.value().reshaped(std::move(shape));
  return input.tape().record(std::move(out), {input}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    auto dst = grads[0]->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  });
}

Var layer_norm_cols(const Var& input, double eps) {
  const Tensor& x = input.value();
  require_rank2(x, "layer_norm_cols");
  const std::size_t d = x.rows();
  const std::size_t k_cols = x.cols();
  if (d == 0) throw DimensionError("layer_norm_cols: no channels");
  Tensor out(x.shape());
  std::vector<double> inv_std(k_cols);
  for (std::size_t k = 0; k < k_cols; ++k) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += x[c * k_cols + k];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = x[c * k_cols + k] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    inv_std[k] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) out[c * k_cols + k] = (x[c * k_cols + k] - mu) * inv_std[k];
  }
  Tensor y = out;
  return input.tape().record(std::move(out), {input},
                             [y, inv_std, d, k_cols](const Tensor& g, std::vector<Tensor*>& grads) {
                               Tensor& gx = *grads[0];
                               const double nd = static_cast<double>(d);
                               for (std::size_t k = 0; k < k_cols; ++k) {
                                 double g_mean = 0.0;
                                 double gy_mean = 0.0;
                                 for (std::size_t c = 0; c < d; ++c) {
                                   g_mean += g[c * k_cols + k];
                                   gy_mean += g[c * k_cols + k] * y[c * k_cols + k];
                                 }
                                 g_mean /= nd;
                                 gy_mean /= nd;
                                 for (std::size_t c = 0; c < d; ++c) {
                                   const std::size_t i = c * k_cols + k;
                                   gx[i] += inv_std[k] * (g[i] - g_mean - y[i] * gy_mean);
                                 }
                               }
                             });
}

Var sum(const Var& input) {
  const Tensor& x = input.value();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return input.tape().record(Tensor::scalar(acc), {input}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    for (auto& v : grads[0]->values()) v += g[0];
  });
}

Var mean(const Var& input) {
  const std::size_t n = input.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(input), 1.0 / static_cast<double>(n));
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.size() != targets.size()) {
    throw DimensionError("bce_with_logits: logits " + z.shape_string() + " vs targets " + targets.shape_string());
  }
  const std::size_t n = z.size();
  if (n == 0) throw DimensionError("bce_with_logits: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  Tensor z_saved = z;
  Tensor t_saved = targets;
  return logits.tape().record(Tensor::scalar(acc / static_cast<double>(n)), {logits},
                              [z_saved, t_saved, n](const Tensor& g, std::vector<Tensor*>& grads) {
                                Tensor& gz = *grads[0];
                                const double s = g[0] / static_cast<double>(n);
                                for (std::size_t i = 0; i < n; ++i) gz[i] += s * (sigmoid_scalar(z_saved[i]) - t_saved[i]);
                              });
}

Var mse(const Var& prediction, const Tensor& target) {
  const Tensor& p = prediction.value();
  if (p.size() != target.size()) {
    throw DimensionError("mse: prediction " + p.shape_string() + " vs target " + target.shape_string());
  }
  const std::size_t n = p.size();
  if (n == 0) throw DimensionError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (p[i] - target[i]) * (p[i] - target[i]);
  Tensor p_saved = p;
  Tensor t_saved = target;
  return prediction.tape().record(Tensor::scalar(acc / static_cast<double>(n)), {prediction},
                                  [p_saved, t_saved, n](const Tensor& g, std::vector<Tensor*>& grads) {
                                    Tensor& gp = *grads[0];
                                    const double s = 2.0 * g[0] / static_cast<double>(n);
                                    for (std::size_t i = 0; i < n; ++i) gp[i] += s * (p_saved[i] - t_saved[i]);
                                  });
}

}  // namespace mmtrack::diff
