#include "mmtrack/adjacency/adjacency.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

namespace mmtrack::adjacency {

using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::string_view to_string(CorrelationOp op) {
  switch (op) {
    case CorrelationOp::Mul: return "mul";
    case CorrelationOp::Sub: return "sub";
    case CorrelationOp::AbsSub: return "abs_sub";
  }
  return "?";
}

CorrelationOp correlation_from_string(std::string_view s) {
  if (s == "mul") return CorrelationOp::Mul;
  if (s == "sub") return CorrelationOp::Sub;
  if (s == "abs_sub") return CorrelationOp::AbsSub;
  throw ConfigError("correlation.op must be mul, sub or abs_sub, got '" + std::string(s) + "'");
}

std::string_view to_string(RankCombine c) {
  switch (c) {
    case RankCombine::Mul: return "mul";
    case RankCombine::Max: return "max";
    case RankCombine::Add: return "add";
    case RankCombine::Mean: return "mean";
  }
  return "?";
}

RankCombine combine_from_string(std::string_view s) {
  if (s == "mul") return RankCombine::Mul;
  if (s == "max") return RankCombine::Max;
  if (s == "add") return RankCombine::Add;
  if (s == "mean") return RankCombine::Mean;
  throw ConfigError("ranking.combine must be mul, max, add or mean, got '" + std::string(s) + "'");
}

Var correlate_slice(const Var& features, std::size_t n, std::size_t m, CorrelationOp op) {
  const Tensor& f = features.value();
  if (f.rank() != 2 || f.cols() != n + m) {
    throw DimensionError("correlate: features " + f.shape_string() + " do not hold " + std::to_string(n) + "+" +
                         std::to_string(m) + " detections");
  }
  Tape& tape = features.tape();
  if (n == 0 || m == 0) return tape.constant(Tensor({f.rows(), 0}));
  std::vector<std::size_t> prev_cols(n * m), cur_cols(n * m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      prev_cols[j * m + k] = j;
      cur_cols[j * m + k] = n + k;
    }
  }
  Var a = diff::gather_cols(features, prev_cols);
  Var b = diff::gather_cols(features, cur_cols);
  switch (op) {
    case CorrelationOp::Mul: return diff::mul(a, b);
    case CorrelationOp::Sub: return diff::sub(a, b);
    case CorrelationOp::AbsSub: return diff::abs(diff::sub(a, b));
  }
  throw ContractError("correlate: unknown operator");
}

CorrelationMap correlate(const fusion::FusedBatch& batch, CorrelationOp op, std::size_t n, std::size_t m) {
  CorrelationMap map;
  map.n = n;
  map.m = m;
  map.op = op;
  for (const auto& s : batch.slices) map.slices.push_back(correlate_slice(s, n, m, op));
  return map;
}

EstimatorWeights EstimatorWeights::make(std::size_t dim, std::mt19937_64& rng, const std::string& prefix) {
  if (dim < 4) throw ConfigError("estimator heads need feature_dim >= 4");
  EstimatorWeights w;
  w.dim = dim;
  const std::size_t half = dim / 2, quarter = dim / 4;
  auto layer = [&](Parameter& wt, Parameter& b, const std::string& name, std::size_t out, std::size_t in) {
    wt = Parameter(prefix + "." + name + ".weight", diff::uniform_init({out, in}, in, rng));
    b = Parameter(prefix + "." + name + ".bias", diff::uniform_init({out}, in, rng));
  };
  layer(w.aff_w1, w.aff_b1, "affinity1", half, dim);
  layer(w.aff_w2, w.aff_b2, "affinity2", quarter, half);
  layer(w.aff_w3, w.aff_b3, "affinity3", 1, quarter);
  layer(w.se_w1, w.se_b1, "start_end1", half, dim);
  layer(w.se_w2, w.se_b2, "start_end2", 1, half);
  layer(w.conf_w1, w.conf_b1, "confidence1", half, dim);
  layer(w.conf_w2, w.conf_b2, "confidence2", 1, half);
  return w;
}

std::vector<Parameter*> EstimatorWeights::parameters() {
  return {&aff_w1, &aff_b1, &aff_w2, &aff_b2, &aff_w3, &aff_b3, &se_w1,   &se_b1,
          &se_w2,  &se_b2,  &conf_w1, &conf_b1, &conf_w2, &conf_b2};
}

namespace {

Var dense(const Var& x, Parameter& w, Parameter& b) {
  Tape& t = x.tape();
  return diff::linear(x, t.param(w), t.param(b));
}

Var start_end_head(const Var& pooled, EstimatorWeights& w) {
  return dense(diff::relu(dense(pooled, w.se_w1, w.se_b1)), w.se_w2, w.se_b2);
}

}  // namespace

Var affinity_scores(const Var& corr, EstimatorWeights& w) {
  Var h = diff::relu(dense(corr, w.aff_w1, w.aff_b1));
  h = diff::relu(dense(h, w.aff_w2, w.aff_b2));
  return dense(h, w.aff_w3, w.aff_b3);
}

std::pair<Var, Var> start_end_scores(const Var& corr, std::size_t n, std::size_t m, EstimatorWeights& w) {
  if (n == 0 || m == 0) throw ContractError("start_end_scores: needs detections in both frames");
  if (corr.value().rank() != 2 || corr.value().cols() != n * m) {
    throw DimensionError("start_end_scores: correlation " + corr.value().shape_string() + " is not " +
                         std::to_string(n) + "x" + std::to_string(m));
  }
  // Start pools each current detection's column over the previous frame.
  std::vector<std::size_t> by_column(n * m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j) by_column[k * n + j] = j * m + k;
  std::vector<diff::Segment> col_segments(m), row_segments(n);
  for (std::size_t k = 0; k < m; ++k) col_segments[k] = {k * n, (k + 1) * n};
  for (std::size_t j = 0; j < n; ++j) row_segments[j] = {j * m, (j + 1) * m};
  Var start_pool = diff::segment_mean(diff::gather_cols(corr, by_column), col_segments);
  Var end_pool = diff::segment_mean(corr, row_segments);
  return {start_end_head(start_pool, w), start_end_head(end_pool, w)};
}

Var confidence_scores(const Var& features, EstimatorWeights& w) {
  return dense(diff::relu(dense(features, w.conf_w1, w.conf_b1)), w.conf_w2, w.conf_b2);
}

Var rank_adjacency(const Var& raw, RankCombine combine) {
  Var row = diff::softmax_rows(raw);
  Var col = diff::transpose(diff::softmax_rows(diff::transpose(raw)));
  switch (combine) {
    case RankCombine::Mul: return diff::mul(row, col);
    case RankCombine::Max: return diff::maximum(row, col);
    case RankCombine::Add: return diff::add(row, col);
    case RankCombine::Mean: return diff::scale(diff::add(row, col), 0.5);
  }
  throw ContractError("rank_adjacency: unknown combiner");
}

Tensor rank_adjacency(const Tensor& raw, RankCombine combine) {
  Tape tape;
  return rank_adjacency(tape.constant(raw), combine).value();
}

SliceScores score_slice(const Var& features, features::Modality tag, std::size_t n, std::size_t m,
                        EstimatorWeights& w, const ScoringOptions& options) {
  Tape& tape = features.tape();
  SliceScores s;
  s.tag = tag;
  s.conf = confidence_scores(features, w);
  Var corr = correlate_slice(features, n, m, options.op);
  if (n > 0 && m > 0) {
    Var link = diff::reshape(affinity_scores(corr, w), {n, m});
    s.link = options.ranking ? rank_adjacency(link, options.combine) : link;
    std::tie(s.start, s.end) = start_end_scores(corr, n, m, w);
  } else {
    s.link = tape.constant(Tensor({n, m}));
    s.start = tape.constant(Tensor({1, m}));
    s.end = tape.constant(Tensor({1, n}));
    // Sequence boundary: nothing to pool over, so both score kinds are padded.
    s.start_padded = true;
    s.end_padded = true;
  }
  return s;
}

ScoreSet score_window(const fusion::FusedBatch& batch, std::size_t n, std::size_t m, EstimatorWeights& w,
                      const ScoringOptions& options) {
  ScoreSet out;
  out.n = n;
  out.m = m;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.slices.push_back(score_slice(batch.slices[i], batch.tags[i], n, m, w, options));
  }
  return out;
}

std::vector<int> assign_ground_truth(std::span<const ingest::Detection> detections,
                                     std::span<const ingest::LabelRecord> labels, double iou_threshold) {
  struct Candidate {
    double overlap;
    std::size_t det;
    std::size_t gt;
  };
  std::vector<Candidate> candidates;
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (labels[g].dont_care()) continue;
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const double o = ingest::iou(detections[d].box2d, labels[g].box2d);
      if (o > iou_threshold) candidates.push_back({o, d, g});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.overlap > b.overlap; });
  std::vector<int> ids(detections.size(), -1);
  std::vector<bool> gt_used(labels.size(), false);
  for (const auto& c : candidates) {
    if (gt_used[c.gt] || ids[c.det] >= 0) continue;
    gt_used[c.gt] = true;
    ids[c.det] = labels[c.gt].track_id;
  }
  return ids;
}

GroundTruthAssociation build_gt_association(std::span<const int> prev_ids, std::span<const int> cur_ids) {
  GroundTruthAssociation gt;
  const std::size_t n = prev_ids.size(), m = cur_ids.size();
  gt.n = n;
  gt.m = m;
  gt.link = Tensor({n, m});
  gt.truth = Tensor({1, n + m});
  gt.start = Tensor({1, m});
  gt.end = Tensor({1, n});
  for (std::size_t j = 0; j < n; ++j) gt.truth[j] = prev_ids[j] >= 0 ? 1.0 : 0.0;
  for (std::size_t k = 0; k < m; ++k) gt.truth[n + k] = cur_ids[k] >= 0 ? 1.0 : 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (prev_ids[j] < 0) continue;
    for (std::size_t k = 0; k < m; ++k) {
      if (cur_ids[k] == prev_ids[j]) gt.link[j * m + k] = 1.0;
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (cur_ids[k] < 0) continue;
    double linked = 0.0;
    for (std::size_t j = 0; j < n; ++j) linked += gt.link[j * m + k];
    gt.start[k] = linked > 0.0 ? 0.0 : 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (prev_ids[j] < 0) continue;
    double linked = 0.0;
    for (std::size_t k = 0; k < m; ++k) linked += gt.link[j * m + k];
    gt.end[j] = linked > 0.0 ? 0.0 : 1.0;
  }
  return gt;
}

GroundTruthAssociation build_gt_association(std::span<const ingest::Detection> prev,
                                            std::span<const ingest::LabelRecord> prev_labels,
                                            std::span<const ingest::Detection> cur,
                                            std::span<const ingest::LabelRecord> cur_labels, double iou_threshold) {
  const auto p = assign_ground_truth(prev, prev_labels, iou_threshold);
  const auto c = assign_ground_truth(cur, cur_labels, iou_threshold);
  return build_gt_association(p, c);
}

Loss compute_loss(const ScoreSet& scores, const GroundTruthAssociation& gt, const LossWeights& weights) {
  if (gt.n != scores.n || gt.m != scores.m) throw DimensionError("compute_loss: ground truth does not fit window");
  Loss loss;
  std::vector<Var> terms;
  for (const auto& s : scores.slices) {
    if (scores.n + scores.m > 0) {
      Var t = diff::bce_with_logits(s.conf, gt.truth);
      loss.parts.truth += t.value().item();
      terms.push_back(diff::scale(t, weights.beta));
    }
    if (scores.n > 0 && scores.m > 0) {
      Var l = diff::mse(s.link, gt.link);
      loss.parts.link += l.value().item();
      terms.push_back(l);
    }
    if (!s.start_padded && scores.m > 0) {
      Var t = diff::mse(diff::sigmoid(s.start), gt.start);
      loss.parts.start += t.value().item();
      terms.push_back(diff::scale(t, weights.alpha));
    }
    if (!s.end_padded && scores.n > 0) {
      Var t = diff::mse(diff::sigmoid(s.end), gt.end);
      loss.parts.end += t.value().item();
      terms.push_back(diff::scale(t, weights.gamma));
    }
  }
  if (terms.empty()) return loss;
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = diff::add(total, terms[i]);
  loss.total = total;
  loss.parts.total = total.value().item();
  return loss;
}

}  // namespace mmtrack::adjacency
