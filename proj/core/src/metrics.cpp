#include "mmtrack/metrics/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <set>

#include "mmtrack/assoc/assoc.hpp"

namespace mmtrack::metrics {

using ingest::LabelRecord;

FrameMatch match_frame(std::span<const LabelRecord> gt_all, std::span<const LabelRecord> hyp_all,
                       const std::map<int, int>& prior, const EvalOptions& options) {
  FrameMatch fm;
  std::vector<const LabelRecord*> gt, hyp, dont_care;
  for (const auto& g : gt_all) (g.dont_care() ? dont_care : gt).push_back(&g);
  for (const auto& h : hyp_all) {
    if (!h.dont_care()) hyp.push_back(&h);
  }
  if (!gt_all.empty()) fm.frame = gt_all.front().frame;
  else if (!hyp_all.empty()) fm.frame = hyp_all.front().frame;

  std::vector<bool> gt_done(gt.size(), false), hyp_done(hyp.size(), false);
  // Continuity: keep last frame's correspondences that still overlap enough.
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto it = prior.find(gt[g]->track_id);
    if (it == prior.end()) continue;
    for (std::size_t h = 0; h < hyp.size(); ++h) {
      if (hyp_done[h] || hyp[h]->track_id != it->second) continue;
      const double o = ingest::iou(gt[g]->box2d, hyp[h]->box2d);
      if (o > options.iou_threshold) {
        fm.matches.push_back({gt[g]->track_id, hyp[h]->track_id, o});
        gt_done[g] = hyp_done[h] = true;
      }
      break;
    }
  }

  std::vector<std::size_t> gi, hi;
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (!gt_done[g]) gi.push_back(g);
  for (std::size_t h = 0; h < hyp.size(); ++h)
    if (!hyp_done[h]) hi.push_back(h);
  const std::size_t size = std::max(gi.size(), hi.size());
  if (size > 0 && !gi.empty() && !hi.empty()) {
    std::vector<double> cost(size * size, 0.0);
    for (std::size_t r = 0; r < gi.size(); ++r) {
      for (std::size_t c = 0; c < hi.size(); ++c) {
        const double o = ingest::iou(gt[gi[r]]->box2d, hyp[hi[c]]->box2d);
        if (o > options.iou_threshold) cost[r * size + c] = -o;
      }
    }
    const auto assignment = assoc::min_cost_assignment(cost, size);
    for (std::size_t r = 0; r < gi.size(); ++r) {
      const std::size_t c = assignment[r];
      if (c >= hi.size() || !(cost[r * size + c] < 0.0)) continue;
      fm.matches.push_back({gt[gi[r]]->track_id, hyp[hi[c]]->track_id, -cost[r * size + c]});
      gt_done[gi[r]] = hyp_done[hi[c]] = true;
    }
  }

  for (std::size_t g = 0; g < gt.size(); ++g)
    if (!gt_done[g]) fm.unmatched_gt.push_back(gt[g]->track_id);
  for (std::size_t h = 0; h < hyp.size(); ++h) {
    if (hyp_done[h]) continue;
    const double area = hyp[h]->box2d.area();
    const bool covered = std::any_of(dont_care.begin(), dont_care.end(), [&](const LabelRecord* d) {
      return area > 0 && ingest::intersection_area(d->box2d, hyp[h]->box2d) / area > options.dont_care_overlap;
    });
    if (covered) {
      ++fm.suppressed;
    } else {
      fm.unmatched_hyp.push_back(hyp[h]->track_id);
    }
  }
  std::sort(fm.matches.begin(), fm.matches.end(), [](const Match& a, const Match& b) { return a.gt_id < b.gt_id; });
  return fm;
}

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  gt += o.gt;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  ids += o.ids;
  frag += o.frag;
  iou_sum += o.iou_sum;
  trajectories += o.trajectories;
  mostly_tracked += o.mostly_tracked;
  partially_tracked += o.partially_tracked;
  mostly_lost += o.mostly_lost;
  return *this;
}

MetricCounts accumulate(std::span<const FrameMatch> frames, const EvalOptions& options) {
  struct GtTrack {
    std::size_t present = 0;
    std::size_t tracked = 0;
    int last_hyp = -1;
    bool ever_tracked = false;
    bool tracked_last = false;
  };
  std::map<int, GtTrack> tracks;
  MetricCounts c;
  for (const auto& f : frames) {
    c.tp += f.matches.size();
    c.fn += f.unmatched_gt.size();
    c.fp += f.unmatched_hyp.size();
    c.gt += f.matches.size() + f.unmatched_gt.size();
    for (const auto& m : f.matches) {
      auto& t = tracks[m.gt_id];
      c.iou_sum += m.iou;
      ++t.present;
      ++t.tracked;
      if (t.last_hyp >= 0 && t.last_hyp != m.hyp_id) ++c.ids;
      if (t.ever_tracked && !t.tracked_last) ++c.frag;
      t.last_hyp = m.hyp_id;
      t.ever_tracked = true;
      t.tracked_last = true;
    }
    for (int id : f.unmatched_gt) {
      auto& t = tracks[id];
      ++t.present;
      t.tracked_last = false;
    }
  }
  for (const auto& [id, t] : tracks) {
    ++c.trajectories;
    const double ratio = t.present ? static_cast<double>(t.tracked) / static_cast<double>(t.present) : 0.0;
    if (ratio >= options.mostly_tracked) {
      ++c.mostly_tracked;
    } else if (ratio <= options.mostly_lost) {
      ++c.mostly_lost;
    } else {
      ++c.partially_tracked;
    }
  }
  return c;
}

MetricReport make_report(const MetricCounts& c) {
  MetricReport r;
  r.counts = c;
  r.fp = c.fp;
  r.fn = c.fn;
  r.ids = c.ids;
  r.frag = c.frag;
  // An empty ground truth set makes MOTA a pure false-positive penalty.
  const double gt = static_cast<double>(std::max<std::size_t>(c.gt, 1));
  r.mota = 1.0 - static_cast<double>(c.fp + c.fn + c.ids) / gt;
  r.motp = c.tp ? c.iou_sum / static_cast<double>(c.tp) : 0.0;
  r.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  if (c.trajectories) {
    const double n = static_cast<double>(c.trajectories);
    r.mt = 100.0 * static_cast<double>(c.mostly_tracked) / n;
    r.pt = 100.0 * static_cast<double>(c.partially_tracked) / n;
    r.ml = 100.0 * static_cast<double>(c.mostly_lost) / n;
  }
  return r;
}

MetricCounts evaluate_sequence(std::span<const LabelRecord> gt, std::span<const LabelRecord> hyp,
                               const EvalOptions& options) {
  std::map<int, std::vector<LabelRecord>> gt_by_frame, hyp_by_frame;
  std::set<int> frames;
  for (const auto& g : gt) {
    gt_by_frame[g.frame].push_back(g);
    frames.insert(g.frame);
  }
  for (const auto& h : hyp) {
    hyp_by_frame[h.frame].push_back(h);
    frames.insert(h.frame);
  }
  std::vector<FrameMatch> matches;
  std::map<int, int> prior;
  static const std::vector<LabelRecord> kNone;
  for (int f : frames) {
    const auto git = gt_by_frame.find(f);
    const auto hit = hyp_by_frame.find(f);
    auto fm = match_frame(git == gt_by_frame.end() ? kNone : git->second, hit == hyp_by_frame.end() ? kNone : hit->second,
                          prior, options);
    fm.frame = f;
    prior.clear();
    for (const auto& m : fm.matches) prior[m.gt_id] = m.hyp_id;
    matches.push_back(std::move(fm));
  }
  return accumulate(matches, options);
}

std::string report_to_json(const MetricReport& r) {
  const auto& c = r.counts;
  nlohmann::json j{{"MOTA", r.mota},
                   {"MOTP", r.motp},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"FP", r.fp},
                   {"FN", r.fn},
                   {"IDS", r.ids},
                   {"Frag", r.frag},
                   {"MT", r.mt},
                   {"PT", r.pt},
                   {"ML", r.ml},
                   {"counts",
                    {{"gt", c.gt},
                     {"tp", c.tp},
                     {"trajectories", c.trajectories},
                     {"mostly_tracked", c.mostly_tracked},
                     {"partially_tracked", c.partially_tracked},
                     {"mostly_lost", c.mostly_lost}}}};
  return j.dump(2) + "\n";
}

namespace {

constexpr const char* kColumns[] = {"MOTA", "MOTP", "Prec.", "Recall", "FP", "FN", "ID-s", "Frag", "MT", "ML"};

std::string format_row(const std::string& label, std::size_t label_width, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%8.2f %8.2f %8.2f %8.2f %8zu %8zu %8zu %8zu %8.2f %8.2f", 100.0 * r.mota,
                100.0 * r.motp, 100.0 * r.precision, 100.0 * r.recall, r.fp, r.fn, r.ids, r.frag, r.mt, r.ml);
  std::string out = label;
  out.resize(label_width, ' ');
  return out + buf + "\n";
}

}  // namespace

std::string report_table(std::span<const std::pair<std::string, MetricReport>> rows) {
  std::size_t width = 0;
  for (const auto& [label, r] : rows) width = std::max(width, label.size());
  if (width > 0) width += 2;
  std::string header(width, ' ');
  for (const char* col : kColumns) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%8s", col);
    if (header.size() > width) header += ' ';
    header += buf;
  }
  std::string out = header + "\n";
  for (const auto& [label, r] : rows) out += format_row(label, width, r);
  return out;
}

std::string report_table(const MetricReport& report, const std::string& label) {
  const std::pair<std::string, MetricReport> row[] = {{label, report}};
  return report_table(row);
}

}  // namespace mmtrack::metrics
