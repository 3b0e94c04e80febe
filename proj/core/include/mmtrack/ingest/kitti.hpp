#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmtrack/ingest/types.hpp"

namespace mmtrack::ingest {

/// Parses a KITTI tracking label/result file (17 or 18 whitespace-separated columns:
/// frame, track_id, type, truncated, occluded, alpha, bbox x4, dims x3, location x3,
/// rotation_y, optional score). Blank lines are skipped. Malformed lines throw ParseError
/// carrying the line number.
std::vector<LabelRecord> parse_labels(std::istream& in);

/// Writes records ordered by (frame, track id) in the canonical column layout
/// (integers for frame/id/truncated/occluded, six decimals for reals).
/// Every non-DontCare record must carry a track id >= 0.
void write_tracks(std::span<const LabelRecord> records, std::ostream& out);
std::string format_record(const LabelRecord& record);

/// Reads P2, R0_rect (or R_rect) and Tr_velo_to_cam (or Tr_velo_cam).
Calibration parse_calib(std::istream& in);
void write_calib(const Calibration& calib, std::ostream& out);

/// Little-endian float32 x 4 per point.
PointCloud read_point_cloud(std::istream& in);
void write_point_cloud(const PointCloud& cloud, std::ostream& out);

/// Keeps detections with score >= min_score, preserving order.
inline constexpr double kDefaultDetectionFilter = 0.3;
std::vector<Detection> filter_detections(std::span<const Detection> dets, double min_score = kDefaultDetectionFilter);

/// Per-sequence patch file: "frame det height width v..." lines, "outage frame" for camera outages.
void write_patches(const SequenceDataset& seq, std::ostream& out);

/// On-disk dataset layout:
///   label_02/<seq>.txt        ground truth (optional)
///   det_02/<seq>.txt          detections (track id -1, score column)
///   calib/<seq>.txt
///   velodyne/<seq>/<frame>.bin  (missing file = LiDAR outage)
///   patches/<seq>.txt
void save_dataset(const std::filesystem::path& root, std::span<const SequenceDataset> sequences);
std::vector<SequenceDataset> load_dataset(const std::filesystem::path& root);
/// Sorted sequence names found under det_02/ (or label_02/ when det_02 is absent).
std::vector<std::string> list_sequences(const std::filesystem::path& root);

}  // namespace mmtrack::ingest
