#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmtrack/ingest/types.hpp"

namespace mmtrack::ingest {

/// Inclusive frame interval.
struct FrameInterval {
  int first = 0;
  int last = -1;
  bool contains(int frame) const noexcept { return frame >= first && frame <= last; }
};

/// Synthetic multi-sensor scenario. Objects move with constant velocity plus a small random
/// walk; each carries a colour identity (camera) and a shaped Gaussian point cluster (LiDAR).
struct ScenarioConfig {
  std::string name = "0000";
  int frames = 20;
  int objects = 6;
  std::uint64_t seed = 0;

  // motion (camera frame, metres per frame)
  double max_speed = 0.4;
  double motion_noise = 0.02;
  double lane_spacing = 3.5;
  double min_depth = 10.0;
  double max_depth = 35.0;
  /// Fraction of objects that appear late or leave early.
  double turnover = 0.0;

  // detector
  double box_noise = 1.0;      // pixel jitter on 2D boxes
  double false_positive_rate = 0.0;  // expected false positives per frame
  double miss_rate = 0.0;

  // camera
  int patch_size = 8;
  double image_noise = 0.03;

  // LiDAR
  int points_per_object = 40;
  int background_points = 150;
  double cloud_noise = 0.05;

  std::vector<FrameInterval> image_outages;
  std::vector<FrameInterval> cloud_outages;
  /// Corruption keeps the payload but destroys its identity information: image patches become
  /// noise, the cloud is yawed by a random extrinsic error.
  std::vector<FrameInterval> image_corruptions;
  std::vector<FrameInterval> cloud_corruptions;

  /// Throws ConfigError for non-positive counts or negative noise levels.
  void validate() const;
  /// Zero motion, detector, camera and LiDAR noise.
  ScenarioConfig noiseless() const;
};

/// Fixed synthetic camera (KITTI-like intrinsics, image 1242 x 375) and LiDAR mount.
Calibration synthetic_calibration();

/// Deterministic for a fixed config (including seed).
SequenceDataset generate_synthetic(const ScenarioConfig& config);

/// Structured-text (JSON) scenario documents.
ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& config);

}  // namespace mmtrack::ingest
