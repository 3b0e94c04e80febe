#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "mmtrack/errors.hpp"
#include "mmtrack/ingest/synthetic.hpp"
#include "mmtrack/io_util.hpp"
#include "mmtrack/metrics/metrics.hpp"
#include "mmtrack/tracker/tracker.hpp"

using namespace mmtrack;
using namespace mmtrack::tracker;
using features::Modality;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MMTRACK_TEST_DATA;

ModelConfig small_model() {
  ModelConfig c;
  c.point_hidden = 16;
  c.image_hidden = 16;
  return c;
}

ingest::SequenceDataset scene(std::uint64_t seed, int frames = 8, int objects = 3) {
  ingest::ScenarioConfig cfg;
  cfg.frames = frames;
  cfg.objects = objects;
  cfg.seed = seed;
  cfg.points_per_object = 20;
  cfg.background_points = 40;
  return ingest::generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("default configuration snapshot") {
  const std::string snapshot = read_text_file(kData / "default_run_config.json");
  CHECK(run_config_to_json(RunConfig{}) + "\n" == snapshot);

  const RunConfig c;
  CHECK(c.model.loss.alpha == 0.4);
  CHECK(c.model.loss.gamma == 0.4);
  CHECK(c.model.loss.beta == 1.5);
  CHECK(c.training.learning_rate == 6e-4);
  CHECK(c.training.epochs == 40);
  CHECK(c.model.confidence_gate == 0.2);
  CHECK(c.model.detection_filter == 0.3);
  CHECK(kFeatureDimOptions == std::array<std::size_t, 2>{64, 512});
}

TEST_CASE("config documents round-trip and reject unknown keys") {
  RunConfig c;
  c.model.fusion = fusion::Variant::B;
  c.model.scoring.combine = adjacency::RankCombine::Mul;
  c.training.epochs = 3;
  c.mask = MaskSchedule::preset("lose-image");
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(back) == run_config_to_json(c));
  CHECK(back.model.fusion == fusion::Variant::B);
  CHECK(back.mask.at(3) == ModalitySet{false, true});

  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"fusoin": {}}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"feature_dim": 100}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"training": {"lr": -1}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{not json"), ConfigError);
  CHECK(run_config_from_json(R"({"model": {"feature_dim": 512}})").model.feature_dim == 512);
}

TEST_CASE("mask schedules") {
  CHECK(MaskSchedule::preset("all").at(0) == ModalitySet{true, true});
  CHECK(MaskSchedule::preset("image-only").at(5) == ModalitySet{true, false});
  CHECK(MaskSchedule::preset("lose-cloud").at(5) == ModalitySet{true, false});
  CHECK(MaskSchedule::preset("cloud-only").at(5) == ModalitySet{false, true});
  CHECK_THROWS_AS(MaskSchedule::preset("radar"), ConfigError);

  const auto m = mask_from_json(R"({"name": "gap", "intervals": [{"frames": [2, 4], "modalities": ["cloud"]},
                                   {"frames": [4, 4], "modalities": []}]})");
  CHECK(m.at(1) == ModalitySet{true, true});
  CHECK(m.at(2) == ModalitySet{false, true});
  CHECK(m.at(4).empty());
  CHECK(mask_from_json(mask_to_json(m)).at(3) == m.at(3));
}

TEST_CASE("boundary padding") {
  CHECK(pad_boundaries(0, 3).start);
  CHECK_FALSE(pad_boundaries(0, 3).end);
  CHECK(pad_boundaries(2, 0).end);
  CHECK_FALSE(pad_boundaries(2, 2).start);
}

TEST_CASE("window modalities intersect the mask with the payloads") {
  const auto seq = scene(1, 3);
  const ModelConfig cfg = small_model();
  auto frames = prepare_sequence(seq, cfg);
  REQUIRE(frames.size() == 3);
  CHECK(window_modalities(frames[0], frames[1], MaskSchedule::preset("all")) == ModalitySet{true, true});
  frames[1].image_descriptors.reset();
  CHECK(window_modalities(frames[0], frames[1], MaskSchedule::preset("all")) == ModalitySet{false, true});
  CHECK(window_modalities(frames[0], frames[1], MaskSchedule::preset("image-only")).empty());

  // An empty side does not constrain the window.
  FrameInputs none;
  none.frame = 3;
  CHECK(window_modalities(frames[2], none, MaskSchedule::preset("all")) == ModalitySet{true, true});
}

TEST_CASE("prepared frames apply the detection filter and carry ground truth ids") {
  ingest::ScenarioConfig cfg;
  cfg.frames = 3;
  cfg.objects = 2;
  cfg.false_positive_rate = 3.0;
  cfg.seed = 4;
  const auto seq = ingest::generate_synthetic(cfg);
  const auto frames = prepare_sequence(seq, small_model());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& d : frames[f].detections) CHECK(d.score >= 0.3);
    CHECK(frames[f].gt_ids.size() == frames[f].size());
    CHECK(frames[f].image_descriptors->cols() == frames[f].size());
    CHECK(frames[f].point_sets->size() == frames[f].size());
  }
}

TEST_CASE("flow problem from slice scores applies the gate and padding") {
  diff::Tape t;
  adjacency::SliceScores s;
  s.conf = t.constant(diff::Tensor::from_rows({{3.0, -3.0, 0.0}}));
  s.link = t.constant(diff::Tensor::from_rows({{0.7, 0.1}}));
  s.start = t.constant(diff::Tensor::from_rows({{0.0, 2.0}}));
  s.end = t.constant(diff::Tensor({1, 1}));
  s.end_padded = true;
  const auto p = flow_problem(s, 1, 2, 0.2);
  CHECK(p.theta_true[0] == doctest::Approx(1 / (1 + std::exp(-3.0))));
  CHECK(p.theta_true[1] == assoc::kGatedScore);
  CHECK(p.theta_true[2] == doctest::Approx(0.5));
  CHECK(p.theta_link == std::vector<double>{0.7, 0.1});
  CHECK(p.theta_start[0] == doctest::Approx(0.5));
  CHECK(p.theta_end[0] == 0.0);
}

TEST_CASE("model checkpoints restore identical scores") {
  const auto seq = scene(2, 2);
  const ModelConfig cfg = small_model();
  const auto frames = prepare_sequence(seq, cfg);
  Model a(cfg, 1);
  Model b(cfg, 2);
  const fs::path path = fs::temp_directory_path() / "mmtrack_unit_model.ckpt";
  a.save(path);
  b.load(path);
  const Modality mods[] = {Modality::Image, Modality::Cloud};
  diff::Tape t;
  const auto sa = a.forward_inference(t, mods, frames[0], frames[1]);
  const auto sb = b.forward_inference(t, mods, frames[0], frames[1]);
  CHECK(sa.tag == Modality::Fused);
  CHECK(sa.link.value() == sb.link.value());
  CHECK(sa.conf.value() == sb.conf.value());
  fs::remove(path);

  ModelConfig wide = cfg;
  wide.feature_dim = 512;
  Model c(wide, 1);
  a.save(path);
  CHECK_THROWS_AS(c.load(path), ParseError);
  fs::remove(path);
  CHECK_THROWS_AS(c.load(path), ConfigError);
}

TEST_CASE("model seeding is deterministic") {
  const ModelConfig cfg = small_model();
  Model a(cfg, 9);
  Model b(cfg, 9);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
}

TEST_CASE("training requires labels") {
  auto seq = scene(3, 3);
  seq.has_ground_truth = false;
  Model m(small_model(), 0);
  const ingest::SequenceDataset seqs[] = {seq};
  CHECK_THROWS_AS(train_loop(m, seqs, {}), ConfigError);
}

TEST_CASE("short training lowers the loss and tracks a clean scene") {
  std::vector<ingest::SequenceDataset> train;
  for (std::uint64_t s = 0; s < 4; ++s) train.push_back(scene(10 + s));
  Model model(small_model(), 0);
  TrainingConfig tc;
  tc.epochs = 15;
  const auto result = train_loop(model, train, tc);
  REQUIRE(result.curve.size() == 15 * 4 * 7);
  auto window_mean = [&](std::size_t begin) {
    double total = 0.0;
    for (std::size_t i = begin; i < begin + 28; ++i) total += result.curve[i].loss.total;
    return total / 28;
  };
  CHECK(window_mean(result.curve.size() - 28) < 0.5 * window_mean(0));

  const auto val = scene(99);
  const auto out = run_sequence(val, model, MaskSchedule::preset("all"));
  CHECK(out.windows.size() == val.frames.size() + 1);
  std::map<int, std::set<int>> ids_per_frame;
  for (const auto& r : out.tracks) {
    CHECK(r.track_id >= 0);
    CHECK(ids_per_frame[r.frame].insert(r.track_id).second);
  }
  for (const auto& w : out.windows) CHECK(assoc::is_feasible(w.problem, w.solution));

  std::vector<ingest::LabelRecord> gt;
  for (const auto& f : val.frames) gt.insert(gt.end(), f.labels.begin(), f.labels.end());
  const auto report = metrics::make_report(metrics::evaluate_sequence(gt, out.tracks));
  CHECK(report.mota > 0.9);
}

TEST_CASE("tracking stops with a sensor failure when no modality is left") {
  const auto seq = scene(5, 3);
  Model model(small_model(), 0);
  auto frames = prepare_sequence(seq, model.config());
  frames[1].image_descriptors.reset();
  CHECK_THROWS_AS(run_sequence(frames, model, MaskSchedule::preset("image-only")), SensorFailureError);
  // With the cloud still present the default mask degrades gracefully.
  CHECK_NOTHROW(run_sequence(frames, model, MaskSchedule::preset("all")));
}
