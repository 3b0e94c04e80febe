#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "mmtrack/errors.hpp"
#include "mmtrack/diff/optim.hpp"
#include "mmtrack/features/features.hpp"
#include "mmtrack/ingest/synthetic.hpp"

using namespace mmtrack;
using namespace mmtrack::features;
using diff::Tape;
using diff::Tensor;

namespace {

ingest::SequenceDataset small_scene() {
  ingest::ScenarioConfig cfg;
  cfg.frames = 2;
  cfg.objects = 3;
  cfg.seed = 5;
  return ingest::generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("frustum selection keeps exactly the points projecting into the box") {
  const auto seq = small_scene();
  const auto& frame = seq.frames[0];
  const auto& cloud = *frame.cloud;
  for (const auto& det : frame.detections) {
    const auto sel = select_frustum_points(cloud, seq.calib, det.box2d);
    CHECK(sel.indices.size() >= 10);
    CHECK(std::is_sorted(sel.indices.begin(), sel.indices.end()));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto cam = seq.calib.velo_to_rect(cloud.points.at(i, 0), cloud.points.at(i, 1), cloud.points.at(i, 2));
      bool inside = cam[2] > 0.0;
      if (inside) {
        const auto px = seq.calib.project(cam);
        inside = det.box2d.contains(px[0], px[1]);
      }
      const bool selected = std::binary_search(sel.indices.begin(), sel.indices.end(), i);
      CHECK(selected == inside);
    }
  }
}

TEST_CASE("points behind the camera are never selected") {
  const auto calib = ingest::synthetic_calibration();
  ingest::PointCloud cloud;
  // LiDAR x points forward; -x is behind the camera.
  cloud.points = Tensor::from_rows({{-10.0, 0.0, 0.0, 0.5}, {10.0, 0.0, -0.5, 0.5}});
  const auto sel = select_frustum_points(cloud, calib, ingest::Box2d{0, 0, 1242, 375});
  REQUIRE(sel.indices.size() == 1);
  CHECK(sel.indices[0] == 1);
}

TEST_CASE("3D box selection") {
  ingest::PointCloud cam;
  cam.points = Tensor::from_rows({{0.0, -0.5, 10.0, 0.0}, {0.0, 0.5, 10.0, 0.0}, {3.0, -0.5, 10.0, 0.0}});
  const ingest::Box3d box{1.5, 1.6, 4.0, 0.0, 0.0, 10.0, 0.0};
  const auto sel = select_box3d_points(cam, box);
  REQUIRE(sel.indices.size() == 1);
  CHECK(sel.indices[0] == 0);
}

TEST_CASE("point encoder ignores point order and rejects empty sets") {
  std::mt19937_64 rng(1);
  PointEncoder enc(PointEncoderConfig{16, 8, false, 0.1}, rng);
  std::mt19937_64 data(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Tensor pts({7, 4});
  for (auto& v : pts.values()) v = u(data);
  Tensor shuffled({7, 4});
  const std::size_t perm[] = {3, 6, 0, 1, 5, 2, 4};
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 4; ++c) shuffled.at(r, c) = pts.at(perm[r], c);

  Tape t;
  const Tensor sets_a[] = {pts};
  const Tensor sets_b[] = {shuffled};
  const Tensor a = enc.encode(t, sets_a).value();
  const Tensor b = enc.encode(t, sets_b).value();
  CHECK(a.rows() == 16);
  CHECK(a.cols() == 1);
  CHECK(a == b);

  const Tensor empty_sets[] = {Tensor({0, 4})};
  CHECK_THROWS_AS(enc.encode(t, empty_sets), DegenerateDetectionError);
  const Tensor mixed[] = {pts, Tensor({0, 4})};
  const Tensor out = enc.encode_or_absent(t, mixed).value();
  CHECK(out.cols() == 2);
  for (std::size_t r = 0; r < 16; ++r) CHECK(out.at(r, 0) == a.at(r, 0));
}

TEST_CASE("point encoder columns do not depend on the other detections") {
  std::mt19937_64 rng(4);
  PointEncoder enc(PointEncoderConfig{16, 8, true, 0.1}, rng);
  const Tensor p1 = Tensor::from_rows({{1, 2, 3, 0.1}, {1.5, 2, 3, 0.2}});
  const Tensor p2 = Tensor::from_rows({{-4, 0, 8, 0.9}});
  Tape t;
  const Tensor alone[] = {p1};
  const Tensor both[] = {p2, p1};
  const Tensor a = enc.encode(t, alone).value();
  const Tensor b = enc.encode(t, both).value();
  for (std::size_t r = 0; r < 16; ++r) CHECK(a.at(r, 0) == b.at(r, 1));
}

TEST_CASE("image descriptor: normalised histograms and moments") {
  ingest::ImagePatch patch;
  patch.height = 2;
  patch.width = 2;
  patch.pixels = {0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0};
  const Tensor d = image_descriptor(patch, 4);
  REQUIRE(d.size() == 3 * 4 + 6);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double total = 0.0;
    for (std::size_t b = 0; b < 4; ++b) total += d[ch * 4 + b];
    CHECK(total == doctest::Approx(1.0));
  }
  CHECK(d[12] == doctest::Approx(0.0));
  CHECK(d[13] == doctest::Approx(0.5));
  CHECK(d[14] == doctest::Approx(1.0));
  CHECK(d[15] == doctest::Approx(0.0));
}

TEST_CASE("image encoder output shape") {
  std::mt19937_64 rng(8);
  ImageEncoder enc(ImageEncoderConfig{32, 16, 8}, rng);
  const auto seq = small_scene();
  Tape t;
  const auto& patches = *seq.frames[0].patches;
  const Tensor out = enc.encode(t, patches).value();
  CHECK(out.rows() == 32);
  CHECK(out.cols() == patches.size());
  CHECK(out.all_finite());
}

TEST_CASE("skip pooling produces 128 channels per level") {
  std::mt19937_64 rng(6);
  SkipPool pool(rng);
  std::vector<Tensor> levels;
  std::size_t side = 8;
  for (std::size_t ch : SkipPool::kLevelChannels) {
    levels.push_back(Tensor({ch, side, side}, 0.25));
    side /= 2;
  }
  Tape t;
  const Tensor out = pool.encode(t, levels).value();
  CHECK(out.rows() == SkipPool::kOutputWidth);
  CHECK(out.cols() == 1);
  CHECK(pool.output_dim() == 512);
  SkipPool projected(rng, 64);
  CHECK(projected.encode(t, levels).value().rows() == 64);

  Tape g;
  const Tensor level = Tensor::from_rows({{1, 2, 3, 4}}).reshaped({1, 2, 2});
  CHECK(global_average_pool(g.constant(level)).value().item() == doctest::Approx(2.5));
}

TEST_CASE("feature cache text round-trip is exact") {
  std::mt19937_64 rng(12);
  std::vector<FeatureCacheEntry> entries(2);
  entries[0] = {3, Modality::Image, diff::uniform_init({5, 2}, 1, rng)};
  entries[1] = {4, Modality::Cloud, diff::uniform_init({5, 3}, 1, rng)};
  std::stringstream ss;
  write_feature_cache(ss, entries);
  const auto back = read_feature_cache(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame == 3);
  CHECK(back[1].modality == Modality::Cloud);
  CHECK(back[0].features == entries[0].features);
  CHECK(back[1].features == entries[1].features);

  std::istringstream bad("wrong header\n");
  CHECK_THROWS_AS(read_feature_cache(bad), ParseError);
}

TEST_CASE("modality names") {
  CHECK(to_string(Modality::Fused) == "fused");
  CHECK(modality_from_string("cloud") == Modality::Cloud);
  CHECK_THROWS(modality_from_string("radar"));
}
