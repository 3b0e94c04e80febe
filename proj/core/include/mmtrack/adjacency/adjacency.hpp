#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mmtrack/diff/ops.hpp"
#include "mmtrack/fusion/fusion.hpp"
#include "mmtrack/ingest/types.hpp"

namespace mmtrack::adjacency {

enum class CorrelationOp { Mul, Sub, AbsSub };
/// Add is the plain sum of the two softmax factors; Mean halves it.
enum class RankCombine { Mul, Max, Add, Mean };

std::string_view to_string(CorrelationOp op);
CorrelationOp correlation_from_string(std::string_view s);
std::string_view to_string(RankCombine c);
RankCombine combine_from_string(std::string_view s);

/// Per slice a D x (N*M) map; column j*M + k pairs previous detection j with current k.
struct CorrelationMap {
  std::vector<diff::Var> slices;
  std::size_t n = 0;
  std::size_t m = 0;
  CorrelationOp op = CorrelationOp::AbsSub;
};

/// `features` is D x (N+M): previous-frame columns first.
diff::Var correlate_slice(const diff::Var& features, std::size_t n, std::size_t m, CorrelationOp op);
CorrelationMap correlate(const fusion::FusedBatch& batch, CorrelationOp op, std::size_t n, std::size_t m);

struct EstimatorConfig {
  std::size_t dim = 64;
};

/// Point-wise heads. Affinity D -> D/2 -> D/4 -> 1, start/end shared D -> D/2 -> 1,
/// confidence D -> D/2 -> 1; relu between layers.
struct EstimatorWeights {
  std::size_t dim = 0;
  diff::Parameter aff_w1, aff_b1, aff_w2, aff_b2, aff_w3, aff_b3;
  diff::Parameter se_w1, se_b1, se_w2, se_b2;
  diff::Parameter conf_w1, conf_b1, conf_w2, conf_b2;

  static EstimatorWeights make(std::size_t dim, std::mt19937_64& rng, const std::string& prefix = "heads");
  std::vector<diff::Parameter*> parameters();
};

/// Raw scores for one slice. Start/end are logits; padded ones are constant zeros that
/// stand for a final score of exactly 0 and carry no loss.
struct SliceScores {
  features::Modality tag = features::Modality::Fused;
  diff::Var conf;   // 1 x (N+M) logits
  diff::Var link;   // N x M, ranked when ranking is enabled (invalid when N*M == 0)
  diff::Var start;  // 1 x M logits
  diff::Var end;    // 1 x N logits
  bool start_padded = false;
  bool end_padded = false;
};

struct ScoreSet {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<SliceScores> slices;
};

/// 1 x (N*M) affinity logits for one correlation slice.
diff::Var affinity_scores(const diff::Var& corr, EstimatorWeights& w);
/// (start 1 x M, end 1 x N). Needs N >= 1 and M >= 1.
std::pair<diff::Var, diff::Var> start_end_scores(const diff::Var& corr, std::size_t n, std::size_t m,
                                                 EstimatorWeights& w);
diff::Var confidence_scores(const diff::Var& features, EstimatorWeights& w);

diff::Var rank_adjacency(const diff::Var& raw, RankCombine combine);
/// Constant-tensor convenience for the same computation.
diff::Tensor rank_adjacency(const diff::Tensor& raw, RankCombine combine);

struct ScoringOptions {
  CorrelationOp op = CorrelationOp::AbsSub;
  bool ranking = true;
  RankCombine combine = RankCombine::Add;
};

/// All heads on every slice of the batch. Slices are scored independently.
ScoreSet score_window(const fusion::FusedBatch& batch, std::size_t n, std::size_t m, EstimatorWeights& w,
                      const ScoringOptions& options);
SliceScores score_slice(const diff::Var& features, features::Modality tag, std::size_t n, std::size_t m,
                        EstimatorWeights& w, const ScoringOptions& options);

struct GroundTruthAssociation {
  std::size_t n = 0;
  std::size_t m = 0;
  diff::Tensor link;   // N x M
  diff::Tensor truth;  // 1 x (N+M)
  diff::Tensor start;  // 1 x M
  diff::Tensor end;    // 1 x N
};

/// Track id per detection (-1 if unassigned): pairs with IoU strictly above the threshold,
/// greedy by descending IoU, at most one detection per ground-truth box. DontCare ignored.
std::vector<int> assign_ground_truth(std::span<const ingest::Detection> detections,
                                     std::span<const ingest::LabelRecord> labels, double iou_threshold = 0.5);

GroundTruthAssociation build_gt_association(std::span<const int> prev_ids, std::span<const int> cur_ids);
GroundTruthAssociation build_gt_association(std::span<const ingest::Detection> prev,
                                            std::span<const ingest::LabelRecord> prev_labels,
                                            std::span<const ingest::Detection> cur,
                                            std::span<const ingest::LabelRecord> cur_labels,
                                            double iou_threshold = 0.5);

struct LossWeights {
  double alpha = 0.4;  // start
  double gamma = 0.4;  // end
  double beta = 1.5;   // confidence
};

struct LossBreakdown {
  double link = 0.0;
  double start = 0.0;
  double end = 0.0;
  double truth = 0.0;
  double total = 0.0;
};

struct Loss {
  diff::Var total;  // invalid when nothing in the window is supervised
  LossBreakdown parts;
};

/// Sum over slices of L_link + alpha L_start + gamma L_end + beta L_true, each term a mean
/// over its elements: BCE on confidence logits, squared error on links and on sigmoid
/// start/end scores.
Loss compute_loss(const ScoreSet& scores, const GroundTruthAssociation& gt, const LossWeights& weights = {});

}  // namespace mmtrack::adjacency
