#include "mmtrack/tracker/model.hpp"

#include <random>

#include "mmtrack/diff/checkpoint.hpp"
#include "mmtrack/errors.hpp"
#include "mmtrack/ingest/kitti.hpp"

namespace mmtrack::tracker {

using diff::Tape;
using diff::Tensor;
using features::Modality;

FrameInputs FrameInputs::subset(std::span<const std::size_t> keep) const {
  FrameInputs out;
  out.frame = frame;
  for (std::size_t i : keep) {
    if (i >= detections.size()) throw ContractError("FrameInputs::subset: index out of range");
    out.detections.push_back(detections[i]);
    if (!gt_ids.empty()) out.gt_ids.push_back(gt_ids[i]);
  }
  if (image_descriptors) {
    const Tensor& d = *image_descriptors;
    const std::size_t rows = d.rows(), cols = d.cols();
    Tensor t({rows, keep.size()});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < keep.size(); ++c) t[r * keep.size() + c] = d[r * cols + keep[c]];
    out.image_descriptors = std::move(t);
  }
  if (point_sets) {
    std::vector<Tensor> sets;
    for (std::size_t i : keep) sets.push_back((*point_sets)[i]);
    out.point_sets = std::move(sets);
  }
  return out;
}

FrameInputs prepare_frame(const ingest::Frame& frame, const ingest::Calibration& calib, const ModelConfig& config) {
  FrameInputs in;
  in.frame = frame.index;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < frame.detections.size(); ++i) {
    if (frame.detections[i].score >= config.detection_filter) {
      kept.push_back(i);
      in.detections.push_back(frame.detections[i]);
    }
  }
  const std::size_t k = kept.size();
  if (frame.patches) {
    if (frame.patches->size() != frame.detections.size()) {
      throw ParseError("frame " + std::to_string(frame.index) + ": patch count does not match detections");
    }
    const std::size_t rows = 3 * config.image_bins + 6;
    Tensor desc({rows, k});
    for (std::size_t c = 0; c < k; ++c) {
      const Tensor v = features::image_descriptor((*frame.patches)[kept[c]], config.image_bins);
      for (std::size_t r = 0; r < rows; ++r) desc[r * k + c] = v[r];
    }
    in.image_descriptors = std::move(desc);
  }
  if (frame.cloud) {
    std::vector<Tensor> sets;
    for (const auto& det : in.detections) {
      sets.push_back(features::gather_points(*frame.cloud, features::select_frustum_points(*frame.cloud, calib, det.box2d)));
    }
    in.point_sets = std::move(sets);
  }
  if (!frame.labels.empty()) in.gt_ids = adjacency::assign_ground_truth(in.detections, frame.labels);
  return in;
}

std::vector<FrameInputs> prepare_sequence(const ingest::SequenceDataset& seq, const ModelConfig& config) {
  std::vector<FrameInputs> out;
  out.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    out.push_back(prepare_frame(f, seq.calib, config));
    if (seq.has_ground_truth && out.back().gt_ids.empty()) out.back().gt_ids.assign(out.back().size(), -1);
  }
  return out;
}

namespace {

std::mt19937_64 component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return std::mt19937_64(seq);
}

features::ImageEncoder make_image(const ModelConfig& c, std::uint64_t seed) {
  auto rng = component_rng(seed, 1);
  return features::ImageEncoder({c.feature_dim, c.image_hidden, c.image_bins}, rng);
}

features::PointEncoder make_points(const ModelConfig& c, std::uint64_t seed) {
  auto rng = component_rng(seed, 2);
  features::PointEncoderConfig pc;
  pc.feature_dim = c.feature_dim;
  pc.hidden = c.point_hidden;
  pc.use_reflectivity = c.use_reflectivity;
  return features::PointEncoder(pc, rng);
}

fusion::FusionWeights make_fusion(const ModelConfig& c, std::uint64_t seed) {
  auto rng = component_rng(seed, 3);
  return fusion::FusionWeights::make(c.fusion, c.feature_dim, rng);
}

adjacency::EstimatorWeights make_heads(const ModelConfig& c, std::uint64_t seed) {
  auto rng = component_rng(seed, 4);
  return adjacency::EstimatorWeights::make(c.feature_dim, rng);
}

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      image_(make_image(config, seed)),
      points_(make_points(config, seed)),
      fusion_(make_fusion(config, seed)),
      heads_(make_heads(config, seed)) {}

std::vector<diff::Parameter*> Model::parameters() {
  std::vector<diff::Parameter*> out;
  for (auto* p : image_.parameters()) out.push_back(p);
  for (auto* p : points_.parameters()) out.push_back(p);
  for (auto* p : fusion_.parameters()) out.push_back(p);
  for (auto* p : heads_.parameters()) out.push_back(p);
  return out;
}

features::EmbeddingBatch Model::embed(Tape& tape, Modality modality, const FrameInputs& prev, const FrameInputs& cur) {
  const std::size_t n = prev.size(), m = cur.size();
  if (n + m == 0) throw ContractError("embed: window has no detections");
  auto require = [&](bool ok, const FrameInputs& f) {
    if (!ok) {
      throw SensorFailureError("frame " + std::to_string(f.frame) + ": " + std::string(features::to_string(modality)) +
                               " payload missing");
    }
  };
  if (modality == Modality::Image) {
    const std::size_t rows = image_.descriptor_size();
    Tensor desc({rows, n + m});
    auto copy = [&](const FrameInputs& f, std::size_t offset) {
      if (f.size() == 0) return;
      require(f.image_descriptors.has_value(), f);
      const Tensor& d = *f.image_descriptors;
      if (d.rows() != rows) throw DimensionError("embed: descriptor size does not match the image encoder");
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < f.size(); ++c) desc[r * (n + m) + offset + c] = d[r * f.size() + c];
    };
    copy(prev, 0);
    copy(cur, n);
    return {Modality::Image, image_.encode_descriptors(tape, desc)};
  }
  if (modality == Modality::Cloud) {
    std::vector<Tensor> sets;
    sets.reserve(n + m);
    for (const FrameInputs* f : {&prev, &cur}) {
      if (f->size() == 0) continue;
      require(f->point_sets.has_value(), *f);
      sets.insert(sets.end(), f->point_sets->begin(), f->point_sets->end());
    }
    return {Modality::Cloud, points_.encode_or_absent(tape, sets)};
  }
  throw ContractError("embed: fused embeddings come from robust_fuse");
}

fusion::FusedBatch Model::fuse(Tape& tape, std::span<const Modality> modalities, const FrameInputs& prev,
                               const FrameInputs& cur) {
  std::vector<features::EmbeddingBatch> singles;
  for (Modality m : modalities) singles.push_back(embed(tape, m, prev, cur));
  return fusion::robust_fuse(singles, fusion_);
}

adjacency::ScoreSet Model::forward(Tape& tape, std::span<const Modality> modalities, const FrameInputs& prev,
                                   const FrameInputs& cur) {
  const auto batch = fuse(tape, modalities, prev, cur);
  return adjacency::score_window(batch, prev.size(), cur.size(), heads_, config_.scoring);
}

adjacency::SliceScores Model::forward_inference(Tape& tape, std::span<const Modality> modalities,
                                                const FrameInputs& prev, const FrameInputs& cur) {
  const auto batch = fuse(tape, modalities, prev, cur);
  const std::size_t s = batch.inference_slice();
  return adjacency::score_slice(batch.slices[s], batch.tags[s], prev.size(), cur.size(), heads_, config_.scoring);
}

void Model::save(const std::filesystem::path& path) {
  auto params = parameters();
  std::vector<const diff::Parameter*> cparams(params.begin(), params.end());
  diff::save_checkpoint(path, cparams);
}

void Model::load(const std::filesystem::path& path) {
  auto params = parameters();
  diff::load_checkpoint(path, params);
}

ModalitySet window_modalities(const FrameInputs& prev, const FrameInputs& cur, const MaskSchedule& mask) {
  ModalitySet s{true, true};
  if (prev.size() > 0) s = s.intersect(mask.at(prev.frame)).intersect(prev.available());
  if (cur.size() > 0) s = s.intersect(mask.at(cur.frame)).intersect(cur.available());
  return s;
}

}  // namespace mmtrack::tracker
