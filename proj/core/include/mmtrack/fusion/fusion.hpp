#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mmtrack/diff/ops.hpp"
#include "mmtrack/features/features.hpp"

namespace mmtrack::fusion {

/// A: concatenate then project. B: per-sensor projection then sum. C: per-sensor
/// projection weighted by a sigmoid attention map, normalised by the attention sum.
enum class Variant { A, B, C };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Physical sensors in slice order.
inline constexpr features::Modality kSensorOrder[] = {features::Modality::Image, features::Modality::Cloud};
inline constexpr std::size_t kSensorCount = 2;
std::size_t sensor_index(features::Modality m);

struct FusionWeights {
  Variant variant = Variant::C;
  std::size_t dim = 0;
  // A
  diff::Parameter concat_w, concat_b;
  // B and C, indexed by sensor_index
  std::vector<diff::Parameter> proj_w, proj_b;
  // C
  std::vector<diff::Parameter> att_w, att_b;

  static FusionWeights make(Variant variant, std::size_t dim, std::mt19937_64& rng,
                            const std::string& prefix = "fusion");
  std::vector<diff::Parameter*> parameters();
};

/// Inputs are single-modality batches with equal shapes, one per distinct sensor.
diff::Var fuse_concat(std::span<const features::EmbeddingBatch> inputs, FusionWeights& w);
diff::Var fuse_add(std::span<const features::EmbeddingBatch> inputs, FusionWeights& w);
diff::Var attention_weights(const features::EmbeddingBatch& input, FusionWeights& w);
diff::Var fuse_attention(std::span<const features::EmbeddingBatch> inputs, FusionWeights& w);

struct FusedBatch {
  std::vector<diff::Var> slices;  // each D x (N+M)
  std::vector<features::Modality> tags;

  std::size_t size() const noexcept { return slices.size(); }
  bool has_fused() const noexcept { return !tags.empty() && tags.back() == features::Modality::Fused; }
  /// Slice used for association: the fused one if present, else the only single.
  std::size_t inference_slice() const noexcept { return slices.size() - 1; }
};

/// Singles in sensor order, plus the fused slice when two or more sensors are present.
/// Throws SensorFailureError when `available` is empty.
FusedBatch robust_fuse(std::span<const features::EmbeddingBatch> available, FusionWeights& w);

}  // namespace mmtrack::fusion
