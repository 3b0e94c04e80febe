#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmtrack/diff/ops.hpp"
#include "mmtrack/ingest/types.hpp"

namespace mmtrack::features {

enum class Modality { Image, Cloud, Fused };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// D x K embeddings, one column per detection in window order.
struct EmbeddingBatch {
  Modality modality = Modality::Image;
  diff::Var features;
};

/// Indices into a frame's point cloud, ascending.
struct PointSelection {
  std::vector<std::size_t> indices;
  bool empty() const noexcept { return indices.empty(); }
};

/// Points with positive rectified-camera depth whose projection lies inside the box
/// (boundaries inclusive).
PointSelection select_frustum_points(const ingest::PointCloud& cloud, const ingest::Calibration& calib,
                                     const ingest::Box2d& box);

/// Points inside a rotated 3D box; `cloud_cam` must already be in rectified camera coordinates.
PointSelection select_box3d_points(const ingest::PointCloud& cloud_cam, const ingest::Box3d& box);

/// Copies the cloud into the rectified camera frame (reflectance kept).
ingest::PointCloud to_camera_frame(const ingest::PointCloud& cloud, const ingest::Calibration& calib);

/// Selected rows of the cloud, n x 4.
diff::Tensor gather_points(const ingest::PointCloud& cloud, const PointSelection& selection);

struct PointEncoderConfig {
  std::size_t feature_dim = 64;
  std::size_t hidden = 32;
  bool use_reflectivity = false;
  double coord_scale = 0.1;
};

/// PointNet-style per-detection encoder: a shared two-layer per-point MLP, average pooling
/// restricted to each detection's points, a global branch pooled from the first layer, and
/// a linear head to feature_dim.
class PointEncoder {
 public:
  PointEncoder(PointEncoderConfig config, std::mt19937_64& rng, const std::string& prefix = "cloud");

  /// One n_i x 4 tensor per detection. Throws DegenerateDetectionError for an empty set.
  diff::Var encode(diff::Tape& tape, std::span<const diff::Tensor> point_sets);
  /// Like encode, but detections without points receive the learned absent vector.
  diff::Var encode_or_absent(diff::Tape& tape, std::span<const diff::Tensor> point_sets);

  std::vector<diff::Parameter*> parameters();
  const PointEncoderConfig& config() const noexcept { return config_; }

 private:
  PointEncoderConfig config_;
  diff::Parameter w1_, b1_, w2_, b2_, head_w_, head_b_, absent_;
};

struct ImageEncoderConfig {
  std::size_t feature_dim = 64;
  std::size_t hidden = 32;
  std::size_t bins = 8;
};

/// Per-channel histograms (bins each, normalised) followed by per-channel mean and
/// standard deviation: 3 * bins + 6 values.
diff::Tensor image_descriptor(const ingest::ImagePatch& patch, std::size_t bins);

class ImageEncoder {
 public:
  ImageEncoder(ImageEncoderConfig config, std::mt19937_64& rng, const std::string& prefix = "image");

  diff::Var encode(diff::Tape& tape, std::span<const ingest::ImagePatch> patches);
  /// Descriptors as columns (descriptor_size x K); lets callers cache them per frame.
  diff::Var encode_descriptors(diff::Tape& tape, const diff::Tensor& descriptors);

  std::size_t descriptor_size() const noexcept { return 3 * config_.bins + 6; }
  std::vector<diff::Parameter*> parameters();
  const ImageEncoderConfig& config() const noexcept { return config_; }

 private:
  ImageEncoderConfig config_;
  diff::Parameter w1_, b1_, w2_, b2_;
};

/// Mean over the spatial extent of a C x H x W map, as a C x 1 column.
diff::Var global_average_pool(const diff::Var& level);

/// Skip pooling over four backbone levels (64, 128, 256, 512 channels): global average
/// pool, then two point-wise convolutions with normalisation and relu to 128 channels per
/// level, concatenated to 512. An optional projection maps 512 to another feature width.
class SkipPool {
 public:
  static constexpr std::size_t kLevelWidth = 128;
  static constexpr std::size_t kOutputWidth = 512;
  static constexpr std::size_t kLevelChannels[4] = {64, 128, 256, 512};

  SkipPool(std::mt19937_64& rng, std::size_t projection_dim = 0, const std::string& prefix = "skip");

  /// One C_l x H_l x W_l tensor per level; returns a single column.
  diff::Var encode(diff::Tape& tape, std::span<const diff::Tensor> levels);
  std::size_t output_dim() const noexcept { return projection_dim_ ? projection_dim_ : kOutputWidth; }
  std::vector<diff::Parameter*> parameters();

 private:
  struct Level {
    diff::Parameter w1, b1, w2, b2;
  };
  std::vector<Level> levels_;
  std::size_t projection_dim_;
  diff::Parameter proj_w_, proj_b_;
};

/// Precomputed embeddings for one frame and modality (D x count).
struct FeatureCacheEntry {
  int frame = 0;
  Modality modality = Modality::Image;
  diff::Tensor features;
};

inline constexpr std::string_view kFeatureCacheHeader = "mmtrack-features 1";

/// Text dump: header line, then per entry "frame F modality M dim D count N" followed by
/// N lines of D values (one line per detection).
void write_feature_cache(std::ostream& out, std::span<const FeatureCacheEntry> entries);
std::vector<FeatureCacheEntry> read_feature_cache(std::istream& in);

}  // namespace mmtrack::features
