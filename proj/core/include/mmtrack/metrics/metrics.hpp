#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmtrack/ingest/types.hpp"

namespace mmtrack::metrics {

struct EvalOptions {
  double iou_threshold = 0.5;
  /// An unmatched hypothesis covered by a DontCare region by more than this fraction of its
  /// own area is not a false positive.
  double dont_care_overlap = 0.5;
  double mostly_tracked = 0.8;
  double mostly_lost = 0.2;
};

struct Match {
  int gt_id = -1;
  int hyp_id = -1;
  double iou = 0.0;
};

struct FrameMatch {
  int frame = 0;
  std::vector<Match> matches;
  std::vector<int> unmatched_gt;   // ids
  std::vector<int> unmatched_hyp;  // ids, DontCare-suppressed ones removed
  std::size_t suppressed = 0;
};

/// `prior` maps gt id -> hypothesis id from earlier frames; such pairs are kept while their
/// IoU stays above threshold, the rest are matched by maximum total IoU.
FrameMatch match_frame(std::span<const ingest::LabelRecord> gt, std::span<const ingest::LabelRecord> hyp,
                       const std::map<int, int>& prior, const EvalOptions& options = {});

/// Raw counts; reports over several sequences merge by summation.
struct MetricCounts {
  std::size_t gt = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t ids = 0;
  std::size_t frag = 0;
  double iou_sum = 0.0;
  std::size_t trajectories = 0;
  std::size_t mostly_tracked = 0;
  std::size_t partially_tracked = 0;
  std::size_t mostly_lost = 0;

  MetricCounts& operator+=(const MetricCounts& o);
};

struct MetricReport {
  double mota = 0.0;
  double motp = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t ids = 0;
  std::size_t frag = 0;
  double mt = 0.0;  // percent of trajectories
  double pt = 0.0;
  double ml = 0.0;
  MetricCounts counts;
};

/// Per-frame matches in frame order, then track-level statistics.
MetricCounts accumulate(std::span<const FrameMatch> frames, const EvalOptions& options = {});
MetricReport make_report(const MetricCounts& counts);

/// Records of one sequence; frames absent from either side count as empty.
MetricCounts evaluate_sequence(std::span<const ingest::LabelRecord> gt, std::span<const ingest::LabelRecord> hyp,
                               const EvalOptions& options = {});

std::string report_to_json(const MetricReport& report);
/// Header plus one row, columns MOTA MOTP Prec. Recall FP FN ID-s Frag MT ML (percent where
/// the quantity is a ratio).
std::string report_table(const MetricReport& report, const std::string& label = "");
std::string report_table(std::span<const std::pair<std::string, MetricReport>> rows);

}  // namespace mmtrack::metrics
