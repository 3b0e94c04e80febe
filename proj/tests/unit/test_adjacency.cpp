#include <doctest.h>

#include <cmath>
#include <random>

#include "mmtrack/adjacency/adjacency.hpp"
#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

using namespace mmtrack;
using namespace mmtrack::adjacency;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using features::Modality;

namespace {

constexpr std::size_t kDim = 8;

// Column-stacks prev then cur.
Tensor window(const Tensor& prev, const Tensor& cur) {
  Tensor out({prev.rows(), prev.cols() + cur.cols()});
  for (std::size_t r = 0; r < prev.rows(); ++r) {
    for (std::size_t c = 0; c < prev.cols(); ++c) out.at(r, c) = prev.at(r, c);
    for (std::size_t c = 0; c < cur.cols(); ++c) out.at(r, prev.cols() + c) = cur.at(r, c);
  }
  return out;
}

Tensor transposed(const Tensor& t) {
  Tensor out({t.cols(), t.rows()});
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(c, r) = t.at(r, c);
  return out;
}

}  // namespace

TEST_CASE("ranking hand cases under mul") {
  const Tensor uniform = rank_adjacency(Tensor::from_rows({{0.3, 0.3}, {0.3, 0.3}}), RankCombine::Mul);
  for (double v : uniform.values()) CHECK(std::abs(v - 0.25) <= 1e-9);

  const Tensor diag = rank_adjacency(Tensor::from_rows({{1, 0}, {0, 1}}), RankCombine::Mul);
  const double e = std::exp(1.0);
  const double on = (e / (e + 1)) * (e / (e + 1));
  const double off = (1 / (e + 1)) * (1 / (e + 1));
  CHECK(std::abs(diag.at(0, 0) - on) <= 1e-9);
  CHECK(std::abs(diag.at(1, 1) - 0.534447) <= 1e-6);
  CHECK(std::abs(diag.at(0, 1) - off) <= 1e-9);
}

TEST_CASE("ranking combiners") {
  const Tensor raw = Tensor::from_rows({{2, 0, 1}, {0, 1, 3}});
  const Tensor add = rank_adjacency(raw, RankCombine::Add);
  const Tensor mean = rank_adjacency(raw, RankCombine::Mean);
  const Tensor mx = rank_adjacency(raw, RankCombine::Max);
  const Tensor mul = rank_adjacency(raw, RankCombine::Mul);
  // Rows of the row-softmax sum to 1 and columns of the column-softmax sum to 1.
  double total = 0.0;
  for (double v : add.values()) total += v;
  CHECK(total == doctest::Approx(2.0 + 3.0));
  for (std::size_t i = 0; i < add.size(); ++i) {
    CHECK(mean[i] == doctest::Approx(add[i] / 2));
    CHECK(mx[i] <= add[i]);
    CHECK(mul[i] <= mx[i]);
  }
  CHECK(combine_from_string("max") == RankCombine::Max);
  CHECK_THROWS_AS(combine_from_string("min"), ConfigError);
}

TEST_CASE("correlation column layout pairs prev j with cur k at j*M + k") {
  Tape t;
  const Tensor prev = Tensor::from_rows({{1, 2}});
  const Tensor cur = Tensor::from_rows({{10, 20, 30}});
  const Var f = t.constant(window(prev, cur));
  const Tensor mul = correlate_slice(f, 2, 3, CorrelationOp::Mul).value();
  CHECK(mul == Tensor::from_rows({{10, 20, 30, 20, 40, 60}}));
  const Tensor sub = correlate_slice(f, 2, 3, CorrelationOp::Sub).value();
  CHECK(sub == Tensor::from_rows({{-9, -19, -29, -8, -18, -28}}));
  const Tensor abs = correlate_slice(f, 2, 3, CorrelationOp::AbsSub).value();
  CHECK(abs == Tensor::from_rows({{9, 19, 29, 8, 18, 28}}));
  const Var only_cur = t.constant(cur);
  CHECK(correlate_slice(only_cur, 0, 3, CorrelationOp::Mul).value().cols() == 0);
}

TEST_CASE("abs_sub scoring is transpose-symmetric under a frame swap, bit for bit") {
  std::mt19937_64 rng(21);
  auto w = EstimatorWeights::make(kDim, rng);
  const Tensor prev = diff::uniform_init({kDim, 3}, 1, rng);
  const Tensor cur = diff::uniform_init({kDim, 4}, 1, rng);
  ScoringOptions opt;
  for (bool ranking : {false, true}) {
    opt.ranking = ranking;
    Tape t;
    const auto fwd = score_slice(t.constant(window(prev, cur)), Modality::Fused, 3, 4, w, opt);
    const auto bwd = score_slice(t.constant(window(cur, prev)), Modality::Fused, 4, 3, w, opt);
    CHECK(bwd.link.value() == transposed(fwd.link.value()).reshaped({4, 3}));
    CHECK(bwd.start.value() == fwd.end.value());
    CHECK(bwd.end.value() == fwd.start.value());
  }
}

TEST_CASE("slice scores do not depend on the other slices") {
  std::mt19937_64 rng(23);
  auto w = EstimatorWeights::make(kDim, rng);
  const Tensor image = diff::uniform_init({kDim, 5}, 1, rng);
  const Tensor cloud = diff::uniform_init({kDim, 5}, 1, rng);
  Tape t;
  fusion::FusedBatch alone;
  alone.slices = {t.constant(cloud)};
  alone.tags = {Modality::Cloud};
  fusion::FusedBatch both;
  both.slices = {t.constant(image), t.constant(cloud)};
  both.tags = {Modality::Image, Modality::Cloud};
  const auto a = score_window(alone, 2, 3, w, {});
  const auto b = score_window(both, 2, 3, w, {});
  REQUIRE(a.slices.size() == 1);
  REQUIRE(b.slices.size() == 2);
  CHECK(a.slices[0].link.value() == b.slices[1].link.value());
  CHECK(a.slices[0].conf.value() == b.slices[1].conf.value());
  CHECK(a.slices[0].start.value() == b.slices[1].start.value());
  CHECK(a.slices[0].end.value() == b.slices[1].end.value());
}

TEST_CASE("head widths follow the feature dimension") {
  std::mt19937_64 rng(1);
  auto w = EstimatorWeights::make(64, rng);
  CHECK(w.aff_w1.value.shape() == diff::Shape{32, 64});
  CHECK(w.aff_w2.value.shape() == diff::Shape{16, 32});
  CHECK(w.aff_w3.value.shape() == diff::Shape{1, 16});
  CHECK(w.se_w1.value.shape() == diff::Shape{32, 64});
  CHECK(w.conf_w2.value.shape() == diff::Shape{1, 32});
  CHECK_THROWS_AS(EstimatorWeights::make(2, rng), ConfigError);
}

TEST_CASE("boundary windows pad start and end") {
  std::mt19937_64 rng(2);
  auto w = EstimatorWeights::make(kDim, rng);
  Tape t;
  const auto s = score_slice(t.constant(diff::uniform_init({kDim, 3}, 1, rng)), Modality::Image, 0, 3, w, {});
  CHECK(s.start_padded);
  CHECK(s.end_padded);
  CHECK(s.conf.value().cols() == 3);
  CHECK(s.start.value() == Tensor({1, 3}));
}

TEST_CASE("ground truth assignment is greedy by IoU with a strict threshold") {
  std::vector<ingest::Detection> dets(3);
  dets[0].box2d = {0, 0, 10, 10};
  dets[1].box2d = {1, 0, 11, 10};
  dets[2].box2d = {100, 100, 110, 110};
  std::vector<ingest::LabelRecord> labels(3);
  labels[0].track_id = 7;
  labels[0].box2d = {1, 0, 11, 10};
  labels[1].track_id = 8;
  labels[1].type = "DontCare";
  labels[1].box2d = {100, 100, 110, 110};
  labels[2].track_id = 9;
  labels[2].box2d = {0, 0, 10, 10};
  const auto ids = assign_ground_truth(dets, labels);
  CHECK(ids == std::vector<int>{9, 7, -1});

  // IoU exactly at the threshold is not a match.
  std::vector<ingest::Detection> half(1);
  half[0].box2d = {0, 0, 10, 10};
  std::vector<ingest::LabelRecord> wide(1);
  wide[0].track_id = 1;
  wide[0].box2d = {0, 0, 20, 10};
  CHECK(ingest::iou(half[0].box2d, wide[0].box2d) == 0.5);
  CHECK(assign_ground_truth(half, wide) == std::vector<int>{-1});
}

TEST_CASE("ground truth association targets") {
  const int prev[] = {4, 5, -1};
  const int cur[] = {5, 6};
  const auto gt = build_gt_association(prev, cur);
  CHECK(gt.link == Tensor::from_rows({{0, 0}, {1, 0}, {0, 0}}));
  CHECK(gt.truth == Tensor::from_rows({{1, 1, 0, 1, 1}}));
  CHECK(gt.start == Tensor::from_rows({{0, 1}}));
  CHECK(gt.end == Tensor::from_rows({{1, 0, 0}}));
}

TEST_CASE("loss sums slices and leaves out padded terms") {
  std::mt19937_64 rng(31);
  auto w = EstimatorWeights::make(kDim, rng);
  const Tensor f = diff::uniform_init({kDim, 4}, 1, rng);
  const int prev[] = {1, 2};
  const int cur[] = {2, 3};
  const auto gt = build_gt_association(prev, cur);
  Tape t;
  fusion::FusedBatch one;
  one.slices = {t.constant(f)};
  one.tags = {Modality::Cloud};
  fusion::FusedBatch two;
  two.slices = {t.constant(f), t.constant(f)};
  two.tags = {Modality::Cloud, Modality::Fused};
  const auto l1 = compute_loss(score_window(one, 2, 2, w, {}), gt);
  const auto l2 = compute_loss(score_window(two, 2, 2, w, {}), gt);
  CHECK(l2.parts.total == doctest::Approx(2 * l1.parts.total).epsilon(1e-12));
  const auto& p = l1.parts;
  CHECK(p.total == doctest::Approx(p.link + 0.4 * p.start + 0.4 * p.end + 1.5 * p.truth).epsilon(1e-12));

  // First window of a sequence: no previous detections, only confidence is supervised.
  const auto gt0 = build_gt_association(std::span<const int>{}, cur);
  fusion::FusedBatch first;
  first.slices = {t.constant(diff::uniform_init({kDim, 2}, 1, rng))};
  first.tags = {Modality::Image};
  const auto l0 = compute_loss(score_window(first, 0, 2, w, {}), gt0);
  CHECK(l0.parts.start == 0.0);
  CHECK(l0.parts.end == 0.0);
  CHECK(l0.parts.link == 0.0);
  CHECK(l0.parts.total == doctest::Approx(1.5 * l0.parts.truth));
}
