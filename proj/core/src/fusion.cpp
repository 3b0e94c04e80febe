#include "mmtrack/fusion/fusion.hpp"

#include <algorithm>
#include <string>

#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

namespace mmtrack::fusion {

using diff::Parameter;
using diff::Var;
using features::EmbeddingBatch;
using features::Modality;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  if (s == "A" || s == "a") return Variant::A;
  if (s == "B" || s == "b") return Variant::B;
  if (s == "C" || s == "c") return Variant::C;
  throw ConfigError("fusion.variant must be A, B or C, got '" + std::string(s) + "'");
}

std::size_t sensor_index(Modality m) {
  switch (m) {
    case Modality::Image: return 0;
    case Modality::Cloud: return 1;
    case Modality::Fused: break;
  }
  throw ContractError("fused embeddings have no sensor index");
}

FusionWeights FusionWeights::make(Variant variant, std::size_t dim, std::mt19937_64& rng, const std::string& prefix) {
  FusionWeights w;
  w.variant = variant;
  w.dim = dim;
  auto square = [&](const std::string& name, std::size_t in) {
    return Parameter(name, diff::uniform_init({dim, in}, in, rng));
  };
  auto bias = [&](const std::string& name, std::size_t fan_in) {
    return Parameter(name, diff::uniform_init({dim}, fan_in, rng));
  };
  if (variant == Variant::A) {
    w.concat_w = square(prefix + ".concat.weight", dim * kSensorCount);
    w.concat_b = bias(prefix + ".concat.bias", dim * kSensorCount);
    return w;
  }
  for (std::size_t s = 0; s < kSensorCount; ++s) {
    const std::string tag = prefix + "." + std::string(features::to_string(kSensorOrder[s]));
    w.proj_w.push_back(square(tag + ".proj.weight", dim));
    w.proj_b.push_back(bias(tag + ".proj.bias", dim));
    if (variant == Variant::C) {
      w.att_w.push_back(square(tag + ".att.weight", dim));
      w.att_b.push_back(bias(tag + ".att.bias", dim));
    }
  }
  return w;
}

std::vector<Parameter*> FusionWeights::parameters() {
  std::vector<Parameter*> out;
  if (variant == Variant::A) return {&concat_w, &concat_b};
  for (std::size_t s = 0; s < proj_w.size(); ++s) {
    out.push_back(&proj_w[s]);
    out.push_back(&proj_b[s]);
    if (variant == Variant::C) {
      out.push_back(&att_w[s]);
      out.push_back(&att_b[s]);
    }
  }
  return out;
}

namespace {

void check_inputs(std::span<const EmbeddingBatch> inputs, const FusionWeights& w, const char* op) {
  if (inputs.size() < 2) throw ContractError(std::string(op) + ": needs at least two modalities");
  std::vector<bool> seen(kSensorCount, false);
  const auto& shape = inputs[0].features.shape();
  for (const auto& in : inputs) {
    const std::size_t s = sensor_index(in.modality);
    if (seen[s]) throw ContractError(std::string(op) + ": duplicate modality");
    seen[s] = true;
    if (in.features.shape() != shape) {
      throw DimensionError(std::string(op) + ": shape " + in.features.value().shape_string() + " vs " +
                           diff::to_string(shape));
    }
  }
  if (shape.size() != 2 || shape[0] != w.dim) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(w.dim) + " channels, got " +
                         diff::to_string(shape));
  }
}

Var project(const EmbeddingBatch& in, std::vector<Parameter>& ws, std::vector<Parameter>& bs) {
  const std::size_t s = sensor_index(in.modality);
  diff::Tape& tape = in.features.tape();
  return diff::linear(in.features, tape.param(ws.at(s)), tape.param(bs.at(s)));
}

std::vector<EmbeddingBatch> in_sensor_order(std::span<const EmbeddingBatch> inputs) {
  std::vector<EmbeddingBatch> sorted(inputs.begin(), inputs.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const EmbeddingBatch& a, const EmbeddingBatch& b) {
    return sensor_index(a.modality) < sensor_index(b.modality);
  });
  return sorted;
}

}  // namespace

Var fuse_concat(std::span<const EmbeddingBatch> inputs, FusionWeights& w) {
  check_inputs(inputs, w, "fuse_concat");
  if (w.variant != Variant::A) throw ContractError("fuse_concat: weights were built for another variant");
  if (inputs.size() != kSensorCount) throw ContractError("fuse_concat: the concatenation width is fixed by the sensor count");
  const auto sorted = in_sensor_order(inputs);
  std::vector<Var> parts;
  for (const auto& in : sorted) parts.push_back(in.features);
  diff::Tape& tape = parts[0].tape();
  return diff::linear(diff::concat(parts, 0), tape.param(w.concat_w), tape.param(w.concat_b));
}

Var fuse_add(std::span<const EmbeddingBatch> inputs, FusionWeights& w) {
  check_inputs(inputs, w, "fuse_add");
  if (w.proj_w.empty()) throw ContractError("fuse_add: weights have no per-sensor projections");
  const auto sorted = in_sensor_order(inputs);
  Var acc = project(sorted[0], w.proj_w, w.proj_b);
  for (std::size_t i = 1; i < sorted.size(); ++i) acc = diff::add(acc, project(sorted[i], w.proj_w, w.proj_b));
  return acc;
}

Var attention_weights(const EmbeddingBatch& input, FusionWeights& w) {
  if (w.att_w.empty()) throw ContractError("attention_weights: weights were not built for variant C");
  return diff::sigmoid(project(input, w.att_w, w.att_b));
}

Var fuse_attention(std::span<const EmbeddingBatch> inputs, FusionWeights& w) {
  check_inputs(inputs, w, "fuse_attention");
  if (w.variant != Variant::C) throw ContractError("fuse_attention: weights were built for another variant");
  const auto sorted = in_sensor_order(inputs);
  Var num, den;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    Var g = attention_weights(sorted[i], w);
    Var term = diff::mul(g, project(sorted[i], w.proj_w, w.proj_b));
    num = i == 0 ? term : diff::add(num, term);
    den = i == 0 ? g : diff::add(den, g);
  }
  for (double v : den.value().values()) {
    if (!(v > 0.0)) throw ContractError("fuse_attention: attention sum underflowed to zero");
  }
  return diff::div(num, den);
}

FusedBatch robust_fuse(std::span<const EmbeddingBatch> available, FusionWeights& w) {
  if (available.empty()) throw SensorFailureError("robust_fuse: no modality available");
  const auto sorted = in_sensor_order(available);
  FusedBatch batch;
  for (const auto& in : sorted) {
    batch.slices.push_back(in.features);
    batch.tags.push_back(in.modality);
  }
  if (sorted.size() >= 2) {
    Var fused;
    switch (w.variant) {
      case Variant::A: fused = fuse_concat(sorted, w); break;
      case Variant::B: fused = fuse_add(sorted, w); break;
      case Variant::C: fused = fuse_attention(sorted, w); break;
    }
    batch.slices.push_back(fused);
    batch.tags.push_back(Modality::Fused);
  }
  return batch;
}

}  // namespace mmtrack::fusion
