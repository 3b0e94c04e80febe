#include <doctest.h>

#include <algorithm>
#include <map>

#include "mmtrack/metrics/metrics.hpp"

using namespace mmtrack;
using namespace mmtrack::metrics;
using ingest::LabelRecord;

namespace {

LabelRecord box(int frame, int id, double x, const std::string& type = "Car") {
  LabelRecord r;
  r.frame = frame;
  r.track_id = id;
  r.type = type;
  r.box2d = {x, 100.0, x + 50.0, 150.0};
  return r;
}

// Two objects over five frames (10 GT boxes). Object 0 changes hypothesis id once, object 1
// is missed in the last frame, and two stray hypotheses appear: FP 2, FN 1, IDS 1.
struct Fixture {
  std::vector<LabelRecord> gt;
  std::vector<LabelRecord> hyp;
};

Fixture hand_fixture() {
  Fixture f;
  for (int t = 0; t < 5; ++t) {
    f.gt.push_back(box(t, 0, 100.0 + 2 * t));
    f.gt.push_back(box(t, 1, 400.0 - 2 * t));
    f.hyp.push_back(box(t, t < 2 ? 11 : 13, 101.0 + 2 * t));
    if (t < 4) f.hyp.push_back(box(t, 12, 399.0 - 2 * t));
  }
  f.hyp.push_back(box(1, 19, 800.0));
  f.hyp.push_back(box(3, 19, 900.0));
  return f;
}

}  // namespace

TEST_CASE("hand fixture: GT 10, FP 2, FN 1, IDS 1 gives MOTA 0.6") {
  const auto f = hand_fixture();
  const auto c = evaluate_sequence(f.gt, f.hyp);
  CHECK(c.gt == 10);
  CHECK(c.fp == 2);
  CHECK(c.fn == 1);
  CHECK(c.ids == 1);
  CHECK(c.tp == 9);
  const auto r = make_report(c);
  CHECK(r.mota == 0.6);
  CHECK(r.precision == doctest::Approx(9.0 / 11.0));
  CHECK(r.recall == doctest::Approx(0.9));
  CHECK(r.mt == 100.0);
  CHECK(r.frag == 0);
}

TEST_CASE("perfect tracking") {
  const auto f = hand_fixture();
  const auto r = make_report(evaluate_sequence(f.gt, f.gt));
  CHECK(r.mota == 1.0);
  CHECK(r.motp == 1.0);
  CHECK(r.ids == 0);
  CHECK(r.fp == 0);
  CHECK(r.fn == 0);
  CHECK(r.ml == 0.0);
}

TEST_CASE("consistent id relabelling leaves the report unchanged") {
  const auto f = hand_fixture();
  const std::map<int, int> hyp_map = {{11, 503}, {12, 7}, {13, 1}, {19, 44}};
  const std::map<int, int> gt_map = {{0, 90}, {1, 3}};
  auto hyp = f.hyp;
  auto gt = f.gt;
  for (auto& h : hyp) h.track_id = hyp_map.at(h.track_id);
  for (auto& g : gt) g.track_id = gt_map.at(g.track_id);
  const auto a = make_report(evaluate_sequence(f.gt, f.hyp));
  const auto b = make_report(evaluate_sequence(gt, hyp));
  CHECK(report_to_json(a) == report_to_json(b));
}

TEST_CASE("continuity keeps an earlier correspondence over a better-overlapping newcomer") {
  std::vector<LabelRecord> gt = {box(0, 0, 100.0), box(1, 0, 100.0)};
  std::vector<LabelRecord> hyp = {box(0, 5, 104.0), box(1, 5, 104.0), box(1, 6, 100.0)};
  const auto c = evaluate_sequence(gt, hyp);
  CHECK(c.ids == 0);
  CHECK(c.fp == 1);
}

TEST_CASE("fragmentation counts interrupted tracking") {
  std::vector<LabelRecord> gt, hyp;
  for (int t = 0; t < 5; ++t) {
    gt.push_back(box(t, 0, 100.0));
    if (t != 2) hyp.push_back(box(t, 4, 100.0));
  }
  const auto r = make_report(evaluate_sequence(gt, hyp));
  CHECK(r.frag == 1);
  CHECK(r.fn == 1);
  CHECK(r.ids == 0);
  CHECK(r.mt == 100.0);
}

TEST_CASE("mostly tracked and mostly lost") {
  std::vector<LabelRecord> gt, hyp;
  for (int t = 0; t < 10; ++t) {
    gt.push_back(box(t, 0, 100.0));
    gt.push_back(box(t, 1, 400.0));
    gt.push_back(box(t, 2, 700.0));
    if (t < 8) hyp.push_back(box(t, 10, 100.0));  // 80%
    if (t < 2) hyp.push_back(box(t, 11, 400.0));  // 20%
    if (t < 5) hyp.push_back(box(t, 12, 700.0));  // 50%
  }
  const auto c = evaluate_sequence(gt, hyp);
  CHECK(c.trajectories == 3);
  CHECK(c.mostly_tracked == 1);
  CHECK(c.mostly_lost == 1);
  CHECK(c.partially_tracked == 1);
}

TEST_CASE("hypotheses inside DontCare regions are not false positives") {
  std::vector<LabelRecord> gt = {box(0, 0, 100.0), box(0, -1, 500.0, "DontCare")};
  std::vector<LabelRecord> hyp = {box(0, 1, 100.0), box(0, 2, 510.0), box(0, 3, 540.0)};
  const auto fm = match_frame(gt, hyp, {});
  CHECK(fm.matches.size() == 1);
  CHECK(fm.suppressed == 1);  // 40 of 50 px inside
  CHECK(fm.unmatched_hyp == std::vector<int>{3});  // 10 of 50 px inside
  CHECK(make_report(evaluate_sequence(gt, hyp)).counts.gt == 1);
}

TEST_CASE("IoU at the threshold does not match") {
  LabelRecord g = box(0, 0, 100.0);
  LabelRecord h = g;
  h.box2d.right = g.box2d.left + 100.0;  // IoU exactly 0.5
  const LabelRecord gs[] = {g};
  const LabelRecord hs[] = {h};
  const auto fm = match_frame(gs, hs, {});
  CHECK(fm.matches.empty());
}

TEST_CASE("empty ground truth penalises every hypothesis") {
  const std::vector<LabelRecord> none;
  const std::vector<LabelRecord> hyp = {box(0, 1, 0.0), box(1, 1, 0.0)};
  const auto r = make_report(evaluate_sequence(none, hyp));
  CHECK(r.fp == 2);
  CHECK(r.mota == -1.0);
}

TEST_CASE("report table layout") {
  const auto f = hand_fixture();
  const auto r = make_report(evaluate_sequence(f.gt, f.hyp));
  const std::string t = report_table(r, "seq");
  CHECK(t.find("MOTA") != std::string::npos);
  CHECK(t.find("60.00") != std::string::npos);
  const std::pair<std::string, MetricReport> rows[] = {{"a", r}, {"b", r}};
  const std::string multi = report_table(rows);
  CHECK(std::count(multi.begin(), multi.end(), '\n') == 3);
}
