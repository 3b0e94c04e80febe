#include "mmtrack/checks/gradcheck_suite.hpp"

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <random>

#include "mmtrack/adjacency/adjacency.hpp"
#include "mmtrack/diff/gradcheck.hpp"
#include "mmtrack/diff/ops.hpp"
#include "mmtrack/features/features.hpp"
#include "mmtrack/fusion/fusion.hpp"
#include "mmtrack/ingest/synthetic.hpp"
#include "mmtrack/tracker/model.hpp"

namespace mmtrack::checks {

using diff::Parameter;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using features::EmbeddingBatch;
using features::Modality;

namespace {

using Rng = std::mt19937_64;

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

struct Case {
  std::shared_ptr<std::deque<Parameter>> store = std::make_shared<std::deque<Parameter>>();
  std::vector<std::shared_ptr<void>> modules;
  std::vector<Parameter*> params;
  diff::ForwardFn forward;
  std::size_t entries_per_param = 0;  // 0 keeps the suite default

  Parameter* add(const std::string& name, Tensor value) {
    store->emplace_back(name, std::move(value));
    params.push_back(&store->back());
    return &store->back();
  }
  void adopt(std::vector<Parameter*> ps) { params.insert(params.end(), ps.begin(), ps.end()); }
};

/// Random linear functional of `out`, so every output entry contributes a distinct weight.
Var probe(const Var& out, const Tensor& weights) {
  Tape& t = out.tape();
  return diff::sum(diff::mul(out, t.constant(weights)));
}

using Factory = std::function<Case(Rng&)>;

struct Item {
  std::string name;
  Factory make;
};

Case unary(Rng& rng, const std::function<Var(const Var&)>& op, double lo = -1.0, double hi = 1.0,
           Shape shape = {3, 4}) {
  Case c;
  Parameter* x = c.add("x", uniform(shape, rng, lo, hi));
  Tape probe_tape;
  const Tensor r = uniform(op(probe_tape.constant(x->value)).value().shape(), rng);
  c.forward = [x, op, r](Tape& t) { return probe(op(t.param(*x)), r); };
  return c;
}

Case binary(Rng& rng, const std::function<Var(const Var&, const Var&)>& op, Shape sa = {3, 4}, Shape sb = {3, 4},
            double lo_b = -1.0, double hi_b = 1.0) {
  Case c;
  Parameter* a = c.add("a", uniform(sa, rng));
  Parameter* b = c.add("b", uniform(sb, rng, lo_b, hi_b));
  Tape probe_tape;
  const Tensor r = uniform(op(probe_tape.constant(a->value), probe_tape.constant(b->value)).value().shape(), rng);
  c.forward = [a, b, op, r](Tape& t) { return probe(op(t.param(*a), t.param(*b)), r); };
  return c;
}

constexpr std::size_t kDim = 8;

std::vector<Item> op_items() {
  std::vector<Item> items;
  items.push_back({"op.linear", [](Rng& rng) {
                     Case c;
                     Parameter* x = c.add("x", uniform({3, 5}, rng));
                     Parameter* w = c.add("w", uniform({4, 3}, rng));
                     Parameter* b = c.add("b", uniform({4}, rng));
                     const Tensor r = uniform({4, 5}, rng);
                     c.forward = [=](Tape& t) { return probe(diff::linear(t.param(*x), t.param(*w), t.param(*b)), r); };
                     return c;
                   }});
  items.push_back({"op.add", [](Rng& rng) { return binary(rng, diff::add); }});
  items.push_back({"op.add.broadcast", [](Rng& rng) { return binary(rng, diff::add, {3, 4}, {1}); }});
  items.push_back({"op.sub", [](Rng& rng) { return binary(rng, diff::sub); }});
  items.push_back({"op.mul", [](Rng& rng) { return binary(rng, diff::mul); }});
  items.push_back({"op.mul.broadcast", [](Rng& rng) { return binary(rng, diff::mul, {3, 4}, {1}); }});
  items.push_back({"op.div", [](Rng& rng) { return binary(rng, diff::div, {3, 4}, {3, 4}, 0.5, 1.5); }});
  items.push_back({"op.abs", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::abs(v); }); }});
  items.push_back({"op.relu", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::relu(v); }); }});
  items.push_back({"op.sigmoid", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::sigmoid(v); }, -3.0, 3.0);
                   }});
  items.push_back({"op.scale", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::scale(v, -1.7); }); }});
  items.push_back({"op.add_scalar", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::add_scalar(v, 0.3); });
                   }});
  items.push_back({"op.maximum", [](Rng& rng) { return binary(rng, diff::maximum); }});
  items.push_back({"op.softmax_rows", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::softmax_rows(v); }, -2.0, 2.0);
                   }});
  items.push_back({"op.transpose", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::transpose(v); }); }});
  items.push_back({"op.segment_mean", [](Rng& rng) {
                     return unary(
                         rng,
                         [](const Var& v) {
                           const diff::Segment segs[] = {{0, 2}, {2, 3}, {3, 6}, {1, 5}};
                           return diff::segment_mean(v, segs);
                         },
                         -1.0, 1.0, {3, 6});
                   }});
  items.push_back({"op.concat.rows", [](Rng& rng) {
                     return binary(rng, [](const Var& a, const Var& b) {
                       const Var parts[] = {a, b};
                       return diff::concat(parts, 0);
                     }, {2, 4}, {3, 4});
                   }});
  items.push_back({"op.concat.cols", [](Rng& rng) {
                     return binary(rng, [](const Var& a, const Var& b) {
                       const Var parts[] = {a, b};
                       return diff::concat(parts, 1);
                     }, {3, 2}, {3, 4});
                   }});
  items.push_back({"op.gather_cols", [](Rng& rng) {
                     return unary(rng, [](const Var& v) {
                       const std::size_t cols[] = {3, 0, 0, 2, 3, 1, 3};
                       return diff::gather_cols(v, cols);
                     });
                   }});
  items.push_back({"op.slice_cols", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::slice_cols(v, 1, 3); });
                   }});
  items.push_back({"op.reshape", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::reshape(v, {2, 6}); });
                   }});
  items.push_back({"op.layer_norm_cols", [](Rng& rng) {
                     return unary(rng, [](const Var& v) { return diff::layer_norm_cols(v); }, -1.0, 1.0, {5, 3});
                   }});
  items.push_back({"op.sum", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::sum(v); }); }});
  items.push_back({"op.mean", [](Rng& rng) { return unary(rng, [](const Var& v) { return diff::mean(v); }); }});
  items.push_back({"op.bce_with_logits", [](Rng& rng) {
                     Case c;
                     Parameter* x = c.add("logits", uniform({1, 7}, rng, -3.0, 3.0));
                     const Tensor target = uniform({1, 7}, rng, 0.0, 1.0);
                     c.forward = [=](Tape& t) { return diff::bce_with_logits(t.param(*x), target); };
                     return c;
                   }});
  items.push_back({"op.mse", [](Rng& rng) {
                     Case c;
                     Parameter* x = c.add("prediction", uniform({3, 3}, rng));
                     const Tensor target = uniform({3, 3}, rng);
                     c.forward = [=](Tape& t) { return diff::mse(t.param(*x), target); };
                     return c;
                   }});
  return items;
}

std::vector<Tensor> random_point_sets(Rng& rng, std::size_t count, bool with_empty) {
  std::uniform_int_distribution<int> n_points(1, 6);
  std::vector<Tensor> sets;
  for (std::size_t i = 0; i < count; ++i) {
    if (with_empty && i == 1) {
      sets.emplace_back(Shape{0, 4});
      continue;
    }
    sets.push_back(uniform({static_cast<std::size_t>(n_points(rng)), 4}, rng, -10.0, 10.0));
  }
  return sets;
}

Case point_encoder_case(Rng& rng, bool with_empty) {
  Case c;
  features::PointEncoderConfig cfg;
  cfg.feature_dim = kDim;
  cfg.hidden = 6;
  cfg.use_reflectivity = true;
  auto enc = std::make_shared<features::PointEncoder>(cfg, rng);
  c.modules.push_back(enc);
  c.adopt(enc->parameters());
  const auto sets = random_point_sets(rng, 4, with_empty);
  const Tensor r = uniform({kDim, sets.size()}, rng);
  c.forward = [enc, sets, r](Tape& t) { return probe(enc->encode_or_absent(t, sets), r); };
  return c;
}

std::vector<Item> encoder_items() {
  std::vector<Item> items;
  items.push_back({"encoder.point", [](Rng& rng) { return point_encoder_case(rng, false); }});
  items.push_back({"encoder.point.absent", [](Rng& rng) { return point_encoder_case(rng, true); }});
  items.push_back({"encoder.image", [](Rng& rng) {
                     Case c;
                     auto enc = std::make_shared<features::ImageEncoder>(features::ImageEncoderConfig{kDim, 6, 4}, rng);
                     c.modules.push_back(enc);
                     c.adopt(enc->parameters());
                     const Tensor desc = uniform({enc->descriptor_size(), 5}, rng, 0.0, 1.0);
                     const Tensor r = uniform({kDim, 5}, rng);
                     c.forward = [enc, desc, r](Tape& t) { return probe(enc->encode_descriptors(t, desc), r); };
                     return c;
                   }});
  items.push_back({"encoder.skip_pool", [](Rng& rng) {
                     Case c;
                     auto pool = std::make_shared<features::SkipPool>(rng, kDim);
                     c.modules.push_back(pool);
                     c.adopt(pool->parameters());
                     std::vector<Tensor> levels;
                     std::size_t side = 4;
                     for (std::size_t ch : features::SkipPool::kLevelChannels) {
                       levels.push_back(uniform({ch, side, side}, rng));
                       side = std::max<std::size_t>(1, side / 2);
                     }
                     const Tensor r = uniform({kDim, 1}, rng);
                     c.forward = [pool, levels, r](Tape& t) { return probe(pool->encode(t, levels), r); };
                     return c;
                   }});
  return items;
}

Case fusion_case(Rng& rng, fusion::Variant variant, bool attention_only) {
  Case c;
  auto w = std::make_shared<fusion::FusionWeights>(fusion::FusionWeights::make(variant, kDim, rng));
  c.modules.push_back(w);
  c.adopt(w->parameters());
  Parameter* img = c.add("image_features", uniform({kDim, 5}, rng));
  Parameter* pts = c.add("cloud_features", uniform({kDim, 5}, rng));
  const Tensor r = uniform({kDim, 5}, rng);
  c.forward = [=](Tape& t) {
    const EmbeddingBatch in[] = {{Modality::Image, t.param(*img)}, {Modality::Cloud, t.param(*pts)}};
    if (attention_only) return probe(fusion::attention_weights(in[1], *w), r);
    const auto batch = fusion::robust_fuse(in, *w);
    return probe(batch.slices.back(), r);
  };
  return c;
}

std::shared_ptr<adjacency::EstimatorWeights> make_heads(Rng& rng) {
  return std::make_shared<adjacency::EstimatorWeights>(adjacency::EstimatorWeights::make(kDim, rng));
}

std::vector<Item> fusion_and_head_items() {
  std::vector<Item> items;
  items.push_back({"fusion.A", [](Rng& rng) { return fusion_case(rng, fusion::Variant::A, false); }});
  items.push_back({"fusion.B", [](Rng& rng) { return fusion_case(rng, fusion::Variant::B, false); }});
  items.push_back({"fusion.C", [](Rng& rng) { return fusion_case(rng, fusion::Variant::C, false); }});
  items.push_back({"fusion.C.attention", [](Rng& rng) { return fusion_case(rng, fusion::Variant::C, true); }});

  for (auto op : {adjacency::CorrelationOp::Mul, adjacency::CorrelationOp::Sub, adjacency::CorrelationOp::AbsSub}) {
    items.push_back({"correlation." + std::string(adjacency::to_string(op)), [op](Rng& rng) {
                       Case c;
                       Parameter* f = c.add("features", uniform({kDim, 5}, rng));
                       const Tensor r = uniform({kDim, 6}, rng);
                       c.forward = [=](Tape& t) { return probe(adjacency::correlate_slice(t.param(*f), 2, 3, op), r); };
                       return c;
                     }});
  }
  items.push_back({"head.affinity", [](Rng& rng) {
                     Case c;
                     auto h = make_heads(rng);
                     c.modules.push_back(h);
                     for (auto* p : {&h->aff_w1, &h->aff_b1, &h->aff_w2, &h->aff_b2, &h->aff_w3, &h->aff_b3}) c.params.push_back(p);
                     Parameter* corr = c.add("correlation", uniform({kDim, 6}, rng));
                     const Tensor r = uniform({1, 6}, rng);
                     c.forward = [=](Tape& t) { return probe(adjacency::affinity_scores(t.param(*corr), *h), r); };
                     return c;
                   }});
  items.push_back({"head.start_end", [](Rng& rng) {
                     Case c;
                     auto h = make_heads(rng);
                     c.modules.push_back(h);
                     for (auto* p : {&h->se_w1, &h->se_b1, &h->se_w2, &h->se_b2}) c.params.push_back(p);
                     Parameter* corr = c.add("correlation", uniform({kDim, 6}, rng));
                     const Tensor rs = uniform({1, 3}, rng);
                     const Tensor re = uniform({1, 2}, rng);
                     c.forward = [=](Tape& t) {
                       auto [start, end] = adjacency::start_end_scores(t.param(*corr), 2, 3, *h);
                       return diff::add(probe(start, rs), probe(end, re));
                     };
                     return c;
                   }});
  items.push_back({"head.confidence", [](Rng& rng) {
                     Case c;
                     auto h = make_heads(rng);
                     c.modules.push_back(h);
                     for (auto* p : {&h->conf_w1, &h->conf_b1, &h->conf_w2, &h->conf_b2}) c.params.push_back(p);
                     Parameter* f = c.add("features", uniform({kDim, 5}, rng));
                     const Tensor r = uniform({1, 5}, rng);
                     c.forward = [=](Tape& t) { return probe(adjacency::confidence_scores(t.param(*f), *h), r); };
                     return c;
                   }});
  for (auto comb : {adjacency::RankCombine::Mul, adjacency::RankCombine::Max, adjacency::RankCombine::Add,
                    adjacency::RankCombine::Mean}) {
    items.push_back({"ranking." + std::string(adjacency::to_string(comb)), [comb](Rng& rng) {
                       return unary(rng, [comb](const Var& v) { return adjacency::rank_adjacency(v, comb); }, -2.0,
                                    2.0, {3, 4});
                     }});
  }
  items.push_back({"loss.window", [](Rng& rng) {
                     Case c;
                     auto h = make_heads(rng);
                     c.modules.push_back(h);
                     c.adopt(h->parameters());
                     Parameter* f0 = c.add("slice0", uniform({kDim, 5}, rng));
                     Parameter* f1 = c.add("slice1", uniform({kDim, 5}, rng));
                     const int prev[] = {3, 1};
                     const int cur[] = {1, -1, 7};
                     const auto gt = adjacency::build_gt_association(prev, cur);
                     c.forward = [=](Tape& t) {
                       fusion::FusedBatch batch;
                       batch.slices = {t.param(*f0), t.param(*f1)};
                       batch.tags = {Modality::Image, Modality::Fused};
                       const auto scores = adjacency::score_window(batch, 2, 3, *h, {});
                       return adjacency::compute_loss(scores, gt).total;
                     };
                     return c;
                   }});
  return items;
}

Case model_case(Rng& rng) {
  Case c;
  ingest::ScenarioConfig sc;
  sc.frames = 2;
  sc.objects = 3;
  sc.points_per_object = 6;
  sc.background_points = 10;
  sc.seed = rng();
  const auto seq = ingest::generate_synthetic(sc);
  tracker::ModelConfig mc;
  mc.point_hidden = 8;
  mc.image_hidden = 8;
  auto model = std::make_shared<tracker::Model>(mc, rng());
  auto frames = std::make_shared<std::vector<tracker::FrameInputs>>(tracker::prepare_sequence(seq, mc));
  c.modules.push_back(model);
  c.modules.push_back(frames);
  c.adopt(model->parameters());
  c.entries_per_param = 3;
  const auto gt = adjacency::build_gt_association((*frames)[0].gt_ids, (*frames)[1].gt_ids);
  c.forward = [model, frames, gt](Tape& t) {
    const Modality mods[] = {Modality::Image, Modality::Cloud};
    const auto scores = model->forward(t, mods, (*frames)[0], (*frames)[1]);
    return adjacency::compute_loss(scores, gt, model->config().loss).total;
  };
  return c;
}

std::vector<Item> all_items() {
  std::vector<Item> items = op_items();
  for (auto& i : encoder_items()) items.push_back(std::move(i));
  for (auto& i : fusion_and_head_items()) items.push_back(std::move(i));
  items.push_back({"model.end_to_end", model_case});
  return items;
}

bool selected(const std::string& name, const std::vector<std::string>& only) {
  if (only.empty()) return true;
  for (const auto& p : only) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> gradcheck_item_names() {
  std::vector<std::string> names;
  for (const auto& i : all_items()) names.push_back(i.name);
  return names;
}

std::vector<ItemResult> run_gradcheck_suite(const SuiteOptions& options) {
  std::vector<ItemResult> results;
  std::uint64_t item_index = 0;
  for (const auto& item : all_items()) {
    ++item_index;
    if (!selected(item.name, options.only)) continue;
    const auto started = std::chrono::steady_clock::now();
    ItemResult res;
    res.name = item.name;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.base_seed), static_cast<std::uint32_t>(item_index),
                        static_cast<std::uint32_t>(s)};
      Rng rng(seq);
      bool ok = false;
      for (std::size_t attempt = 0; attempt <= options.max_redraws; ++attempt) {
        Case c = item.make(rng);
        diff::GradCheckOptions go;
        go.step = options.step;
        go.tolerance = options.tolerance;
        go.max_entries_per_param = c.entries_per_param ? c.entries_per_param : options.entries_per_param;
        go.sample_seed = rng();
        go.corrupt_backward = options.corrupt_backward;
        const auto report = diff::grad_check(c.forward, c.params, go);
        if (report.kink_crossings > 0 && attempt < options.max_redraws) {
          ++res.redraws;
          continue;
        }
        res.unresolved_crossings += report.kink_crossings;
        for (const auto& pc : report.params) {
          if (pc.max_rel_error > res.worst_error) {
            res.worst_error = pc.max_rel_error;
            res.worst_param = pc.name;
          }
        }
        ok = report.passed;
        break;
      }
      ++res.seeds_run;
      if (ok) ++res.seeds_passed;
    }
    res.passed = res.seeds_run > 0 && res.seeds_passed == res.seeds_run;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    results.push_back(res);
  }
  return results;
}

}  // namespace mmtrack::checks
