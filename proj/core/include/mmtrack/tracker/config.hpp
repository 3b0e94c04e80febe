#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmtrack/adjacency/adjacency.hpp"
#include "mmtrack/features/features.hpp"
#include "mmtrack/fusion/fusion.hpp"
#include "mmtrack/ingest/synthetic.hpp"

namespace mmtrack::tracker {

inline constexpr std::array<std::size_t, 2> kFeatureDimOptions = {64, 512};

struct ModelConfig {
  std::size_t feature_dim = 64;
  fusion::Variant fusion = fusion::Variant::C;
  adjacency::ScoringOptions scoring;
  adjacency::LossWeights loss;
  double confidence_gate = 0.2;
  double detection_filter = 0.3;
  std::size_t point_hidden = 32;
  std::size_t image_hidden = 32;
  std::size_t image_bins = 8;
  bool use_reflectivity = false;

  /// Throws ConfigError.
  void validate() const;
};

struct TrainingConfig {
  std::size_t epochs = 40;
  double learning_rate = 6e-4;
  std::uint64_t seed = 0;
  /// Wall-clock cap in seconds; 0 disables it.
  double time_budget = 0.0;
};

struct ModalitySet {
  bool image = true;
  bool cloud = true;

  bool empty() const noexcept { return !image && !cloud; }
  bool contains(features::Modality m) const;
  ModalitySet intersect(const ModalitySet& o) const noexcept { return {image && o.image, cloud && o.cloud}; }
  std::vector<features::Modality> list() const;
  std::string to_string() const;
  friend bool operator==(const ModalitySet&, const ModalitySet&) = default;
};

struct MaskInterval {
  ingest::FrameInterval frames;
  ModalitySet modalities;
};

/// Per-frame modality availability: a base set overridden by intervals (later ones win).
struct MaskSchedule {
  std::string name = "all";
  ModalitySet base;
  std::vector<MaskInterval> intervals;

  ModalitySet at(int frame) const;
  /// all, lose-image (cloud only), lose-cloud (image only), image-only, cloud-only.
  static MaskSchedule preset(const std::string& name);
};

struct Paths {
  std::string dataset;
  std::string checkpoint;
  std::string output;
  std::string ground_truth;
};

struct RunConfig {
  Paths paths;
  ModelConfig model;
  TrainingConfig training;
  MaskSchedule mask;
  std::optional<ingest::ScenarioConfig> scenario;

  void validate() const;
};

/// JSON document with sections paths, model, training, mask and scenario; absent keys keep
/// their defaults. Unknown keys are rejected so typos surface as config errors.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& config);

MaskSchedule mask_from_json(const std::string& text);
std::string mask_to_json(const MaskSchedule& mask);

}  // namespace mmtrack::tracker
