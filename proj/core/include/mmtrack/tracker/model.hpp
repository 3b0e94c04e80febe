#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mmtrack/adjacency/adjacency.hpp"
#include "mmtrack/features/features.hpp"
#include "mmtrack/fusion/fusion.hpp"
#include "mmtrack/ingest/types.hpp"
#include "mmtrack/tracker/config.hpp"

namespace mmtrack::tracker {

/// Sensor inputs of one frame's detections, reduced to what the encoders consume.
struct FrameInputs {
  int frame = 0;
  std::vector<ingest::Detection> detections;
  /// descriptor_size x K; absent when the camera payload is missing.
  std::optional<diff::Tensor> image_descriptors;
  /// One n_i x 4 frustum point set per detection; absent when the LiDAR payload is missing.
  std::optional<std::vector<diff::Tensor>> point_sets;
  /// Ground-truth track id per detection (-1 unassigned) when labels exist.
  std::vector<int> gt_ids;

  std::size_t size() const noexcept { return detections.size(); }
  ModalitySet available() const noexcept { return {image_descriptors.has_value(), point_sets.has_value()}; }
  /// Keeps the listed detections, in the given order.
  FrameInputs subset(std::span<const std::size_t> keep) const;
};

/// Applies the detection filter and computes per-detection descriptors and point sets.
FrameInputs prepare_frame(const ingest::Frame& frame, const ingest::Calibration& calib, const ModelConfig& config);
std::vector<FrameInputs> prepare_sequence(const ingest::SequenceDataset& seq, const ModelConfig& config);

/// Encoders, fusion and estimator heads.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<diff::Parameter*> parameters();

  /// Embeddings for one modality over the window, previous detections first.
  features::EmbeddingBatch embed(diff::Tape& tape, features::Modality modality, const FrameInputs& prev,
                                 const FrameInputs& cur);
  fusion::FusedBatch fuse(diff::Tape& tape, std::span<const features::Modality> modalities, const FrameInputs& prev,
                          const FrameInputs& cur);
  /// Scores of every slice.
  adjacency::ScoreSet forward(diff::Tape& tape, std::span<const features::Modality> modalities,
                              const FrameInputs& prev, const FrameInputs& cur);
  /// Scores of the inference slice only.
  adjacency::SliceScores forward_inference(diff::Tape& tape, std::span<const features::Modality> modalities,
                                           const FrameInputs& prev, const FrameInputs& cur);

  void save(const std::filesystem::path& path);
  /// Throws ConfigError when the file is missing, ParseError when it does not fit this model.
  void load(const std::filesystem::path& path);

  features::PointEncoder& point_encoder() noexcept { return points_; }
  features::ImageEncoder& image_encoder() noexcept { return image_; }
  fusion::FusionWeights& fusion_weights() noexcept { return fusion_; }
  adjacency::EstimatorWeights& heads() noexcept { return heads_; }

 private:
  ModelConfig config_;
  features::ImageEncoder image_;
  features::PointEncoder points_;
  fusion::FusionWeights fusion_;
  adjacency::EstimatorWeights heads_;
};

/// Modalities usable for a window: the mask at both frames intersected with the payloads
/// present on each side that has detections.
ModalitySet window_modalities(const FrameInputs& prev, const FrameInputs& cur, const MaskSchedule& mask);

}  // namespace mmtrack::tracker
