#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mmtrack/diff/tensor.hpp"

namespace mmtrack::ingest {

/// Image-plane box in pixels.
struct Box2d {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const noexcept { return right - left; }
  double height() const noexcept { return bottom - top; }
  double area() const noexcept;
  bool valid() const noexcept { return left < right && top < bottom; }
  bool contains(double u, double v) const noexcept { return u >= left && u <= right && v >= top && v <= bottom; }
  friend bool operator==(const Box2d&, const Box2d&) = default;
};

double intersection_area(const Box2d& a, const Box2d& b);
double iou(const Box2d& a, const Box2d& b);

/// Camera-frame 3D box, KITTI convention: (x, y, z) is the bottom-face centre, y points down.
struct Box3d {
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double rotation_y = 0.0;
  friend bool operator==(const Box3d&, const Box3d&) = default;
};

struct Detection {
  int frame = 0;
  Box2d box2d;
  std::optional<Box3d> box3d;
  /// Observation angle as read from disk; derived from box3d when absent.
  std::optional<double> alpha;
  double score = 1.0;
  std::string class_label = "Car";
};

/// One line of a KITTI tracking label or result file.
struct LabelRecord {
  int frame = 0;
  int track_id = -1;
  std::string type = "Car";
  int truncated = 0;
  int occluded = 0;
  double alpha = -10.0;
  Box2d box2d;
  Box3d box3d{-1.0, -1.0, -1.0, -1000.0, -1000.0, -1000.0, -10.0};
  std::optional<double> score;

  bool dont_care() const noexcept { return type == "DontCare"; }
  bool has_box3d() const noexcept { return box3d.height > 0.0; }
  Detection to_detection() const;
};

/// Detection with the track id the tracker assigned to it.
LabelRecord to_record(const Detection& det, int track_id);

using Mat34 = std::array<std::array<double, 4>, 3>;
using Mat44 = std::array<std::array<double, 4>, 4>;

Mat44 identity4();
Mat34 identity34();
Mat44 multiply(const Mat44& a, const Mat44& b);
/// Inverse of a rigid transform [R | t; 0 0 0 1].
Mat44 rigid_inverse(const Mat44& m);

struct Calibration {
  Mat34 projection = identity34();   // P2
  Mat44 rectification = identity4();  // R0_rect padded to 4x4
  Mat44 velo_to_cam = identity4();    // Tr_velo_to_cam padded to 4x4

  /// LiDAR point to rectified camera coordinates.
  std::array<double, 3> velo_to_rect(double x, double y, double z) const;
  /// Rectified camera point to pixel coordinates; requires z != 0.
  std::array<double, 2> project(const std::array<double, 3>& cam) const;
};

/// L x 4 tensor of (x, y, z, reflectance) in the LiDAR frame.
struct PointCloud {
  diff::Tensor points{diff::Shape{0, 4}};
  std::size_t size() const { return points.dim(0); }
};

/// Feature-ready image patch, row-major height x width x 3, values in [0, 1].
struct ImagePatch {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  friend bool operator==(const ImagePatch&, const ImagePatch&) = default;
};

struct Frame {
  int index = 0;
  std::vector<Detection> detections;
  /// One patch per detection; empty optional during a camera outage.
  std::optional<std::vector<ImagePatch>> patches;
  /// Empty optional during a LiDAR outage.
  std::optional<PointCloud> cloud;
  /// Ground truth for this frame, DontCare regions included.
  std::vector<LabelRecord> labels;
};

struct SequenceDataset {
  std::string name;
  Calibration calib;
  std::vector<Frame> frames;
  bool has_ground_truth = false;

  /// Throws ContractError unless frame indices strictly increase and GT ids are unique per frame.
  void validate() const;
};

}  // namespace mmtrack::ingest
