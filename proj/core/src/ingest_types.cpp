#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "mmtrack/errors.hpp"
#include "mmtrack/ingest/types.hpp"

namespace mmtrack::ingest {

double Box2d::area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }

double intersection_area(const Box2d& a, const Box2d& b) {
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box2d& a, const Box2d& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

Detection LabelRecord::to_detection() const {
  Detection det;
  det.frame = frame;
  det.box2d = box2d;
  if (has_box3d()) {
    det.box3d = box3d;
    det.alpha = alpha;
  }
  det.score = score.value_or(1.0);
  det.class_label = type;
  return det;
}

LabelRecord to_record(const Detection& det, int track_id) {
  LabelRecord r;
  r.frame = det.frame;
  r.track_id = track_id;
  r.type = det.class_label;
  r.truncated = -1;
  r.occluded = -1;
  r.box2d = det.box2d;
  if (det.box3d) {
    r.box3d = *det.box3d;
    r.alpha = det.alpha.value_or(det.box3d->rotation_y - std::atan2(det.box3d->x, det.box3d->z));
  }
  r.score = det.score;
  return r;
}

Mat44 identity4() {
  Mat44 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

Mat34 identity34() {
  Mat34 m{};
  for (int i = 0; i < 3; ++i) m[i][i] = 1.0;
  return m;
}

Mat44 multiply(const Mat44& a, const Mat44& b) {
  Mat44 out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat44 rigid_inverse(const Mat44& m) {
  Mat44 out = identity4();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = m[j][i];
  for (int i = 0; i < 3; ++i) {
    double t = 0.0;
    for (int j = 0; j < 3; ++j) t -= out[i][j] * m[j][3];
    out[i][3] = t;
  }
  return out;
}

std::array<double, 3> Calibration::velo_to_rect(double x, double y, double z) const {
  const std::array<double, 4> p{x, y, z, 1.0};
  std::array<double, 4> cam{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) cam[i] += velo_to_cam[i][k] * p[k];
  std::array<double, 4> rect{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) rect[i] += rectification[i][k] * cam[k];
  return {rect[0], rect[1], rect[2]};
}

std::array<double, 2> Calibration::project(const std::array<double, 3>& cam) const {
  const std::array<double, 4> p{cam[0], cam[1], cam[2], 1.0};
  std::array<double, 3> img{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) img[i] += projection[i][k] * p[k];
  return {img[0] / img[2], img[1] / img[2]};
}

void SequenceDataset::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].index <= frames[i - 1].index) {
      throw ContractError("sequence " + name + ": frame indices not strictly increasing at position " +
                          std::to_string(i));
    }
  }
  for (const auto& f : frames) {
    std::set<int> ids;
    for (const auto& l : f.labels) {
      if (l.dont_care()) continue;
      if (!ids.insert(l.track_id).second) {
        throw ContractError("sequence " + name + ": duplicate ground-truth id " + std::to_string(l.track_id) +
                            " in frame " + std::to_string(f.index));
      }
    }
    if (f.patches && f.patches->size() != f.detections.size()) {
      throw ContractError("sequence " + name + ": frame " + std::to_string(f.index) +
                          " has a patch count that differs from its detection count");
    }
  }
}

}  // namespace mmtrack::ingest
