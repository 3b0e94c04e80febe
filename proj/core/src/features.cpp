#include "mmtrack/features/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

namespace mmtrack::features {

using diff::Parameter;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Cloud: return "cloud";
    case Modality::Fused: return "fused";
  }
  return "unknown";
}

Modality modality_from_string(std::string_view s) {
  if (s == "image") return Modality::Image;
  if (s == "cloud") return Modality::Cloud;
  if (s == "fused") return Modality::Fused;
  throw ParseError("unknown modality '" + std::string(s) + "'");
}

PointSelection select_frustum_points(const ingest::PointCloud& cloud, const ingest::Calibration& calib,
                                     const ingest::Box2d& box) {
  PointSelection sel;
  const Tensor& pts = cloud.points;
  const std::size_t n = cloud.size();
  const std::size_t c = pts.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cam = calib.velo_to_rect(pts[i * c], pts[i * c + 1], pts[i * c + 2]);
    if (!(cam[2] > 0.0)) continue;
    const auto uv = calib.project(cam);
    if (box.contains(uv[0], uv[1])) sel.indices.push_back(i);
  }
  return sel;
}

PointSelection select_box3d_points(const ingest::PointCloud& cloud_cam, const ingest::Box3d& box) {
  PointSelection sel;
  const Tensor& pts = cloud_cam.points;
  const std::size_t n = cloud_cam.size();
  if (n == 0) return sel;
  const std::size_t c = pts.dim(1);
  const double cs = std::cos(box.rotation_y);
  const double sn = std::sin(box.rotation_y);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pts[i * c] - box.x;
    const double dy = pts[i * c + 1] - box.y;
    const double dz = pts[i * c + 2] - box.z;
    const double along_length = cs * dx - sn * dz;
    const double along_width = sn * dx + cs * dz;
    if (std::abs(along_length) <= 0.5 * box.length && std::abs(along_width) <= 0.5 * box.width && dy <= 0.0 &&
        dy >= -box.height) {
      sel.indices.push_back(i);
    }
  }
  return sel;
}

ingest::PointCloud to_camera_frame(const ingest::PointCloud& cloud, const ingest::Calibration& calib) {
  ingest::PointCloud out;
  const std::size_t n = cloud.size();
  const std::size_t c = cloud.points.dim(1);
  out.points = Tensor({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto cam = calib.velo_to_rect(cloud.points[i * c], cloud.points[i * c + 1], cloud.points[i * c + 2]);
    for (std::size_t k = 0; k < 3; ++k) out.points[i * c + k] = cam[k];
    for (std::size_t k = 3; k < c; ++k) out.points[i * c + k] = cloud.points[i * c + k];
  }
  return out;
}

Tensor gather_points(const ingest::PointCloud& cloud, const PointSelection& selection) {
  const std::size_t c = cloud.points.dim(1);
  Tensor out({selection.indices.size(), 4});
  for (std::size_t r = 0; r < selection.indices.size(); ++r) {
    const std::size_t i = selection.indices[r];
    if (i >= cloud.size()) throw ContractError("gather_points: index out of range");
    for (std::size_t k = 0; k < std::min<std::size_t>(c, 4); ++k) out[r * 4 + k] = cloud.points[i * c + k];
  }
  return out;
}

namespace {

Parameter make_weight(const std::string& name, std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return Parameter(name, diff::uniform_init({out, in}, in, rng));
}

Parameter make_bias(const std::string& name, std::size_t out, std::size_t fan_in, std::mt19937_64& rng) {
  return Parameter(name, diff::uniform_init({out}, fan_in, rng));
}

}  // namespace

PointEncoder::PointEncoder(PointEncoderConfig config, std::mt19937_64& rng, const std::string& prefix)
    : config_(config) {
  const std::size_t in = config_.use_reflectivity ? 4 : 3;
  const std::size_t h = config_.hidden;
  w1_ = make_weight(prefix + ".mlp1.weight", h, in, rng);
  b1_ = make_bias(prefix + ".mlp1.bias", h, in, rng);
  w2_ = make_weight(prefix + ".mlp2.weight", h, h, rng);
  b2_ = make_bias(prefix + ".mlp2.bias", h, h, rng);
  head_w_ = make_weight(prefix + ".head.weight", config_.feature_dim, 2 * h, rng);
  head_b_ = make_bias(prefix + ".head.bias", config_.feature_dim, 2 * h, rng);
  absent_ = Parameter(prefix + ".absent", diff::uniform_init({config_.feature_dim, 1}, config_.feature_dim, rng));
}

Var PointEncoder::encode(Tape& tape, std::span<const Tensor> point_sets) {
  const std::size_t in = config_.use_reflectivity ? 4 : 3;
  std::size_t total = 0;
  std::vector<diff::Segment> segments;
  for (std::size_t d = 0; d < point_sets.size(); ++d) {
    const std::size_t n = point_sets[d].rank() == 2 ? point_sets[d].dim(0) : 0;
    if (n == 0) throw DegenerateDetectionError("encode_points: detection " + std::to_string(d) + " has no points");
    if (point_sets[d].dim(1) < in) throw DimensionError("encode_points: point rows need at least " + std::to_string(in) + " values");
    segments.push_back({total, total + n});
    total += n;
  }

  // Canonical (lexicographic) order inside each detection makes the pooled sums
  // independent of the order points arrive in.
  Tensor channels({in, total});
  for (std::size_t d = 0; d < point_sets.size(); ++d) {
    const Tensor& pts = point_sets[d];
    const std::size_t n = pts.dim(0);
    const std::size_t c = pts.dim(1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(&pts[a * c], &pts[a * c] + c, &pts[b * c], &pts[b * c] + c);
    });
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < in; ++k) {
        const double scale = k < 3 ? config_.coord_scale : 1.0;
        channels[k * total + segments[d].begin + r] = pts[order[r] * c + k] * scale;
      }
    }
  }

  Var x = tape.constant(std::move(channels));
  Var h1 = diff::relu(diff::linear(x, tape.param(w1_), tape.param(b1_)));
  Var h2 = diff::relu(diff::linear(h1, tape.param(w2_), tape.param(b2_)));
  Var local = diff::segment_mean(h2, segments);
  Var global = diff::segment_mean(h1, segments);
  const Var parts[] = {local, global};
  return diff::linear(diff::concat(parts, 0), tape.param(head_w_), tape.param(head_b_));
}

Var PointEncoder::encode_or_absent(Tape& tape, std::span<const Tensor> point_sets) {
  std::vector<Tensor> present;
  std::vector<std::size_t> columns(point_sets.size());
  std::size_t absent_count = 0;
  for (std::size_t d = 0; d < point_sets.size(); ++d) {
    const bool empty = point_sets[d].rank() != 2 || point_sets[d].dim(0) == 0;
    if (empty) {
      ++absent_count;
      continue;
    }
    columns[d] = present.size();
    present.push_back(point_sets[d]);
  }
  if (absent_count == 0) return encode(tape, point_sets);
  Var absent = tape.param(absent_);
  for (std::size_t d = 0; d < point_sets.size(); ++d) {
    const bool empty = point_sets[d].rank() != 2 || point_sets[d].dim(0) == 0;
    if (empty) columns[d] = present.size();
  }
  if (present.empty()) return diff::gather_cols(absent, std::vector<std::size_t>(point_sets.size(), 0));
  const Var parts[] = {encode(tape, present), absent};
  return diff::gather_cols(diff::concat(parts, 1), columns);
}

std::vector<Parameter*> PointEncoder::parameters() {
  return {&w1_, &b1_, &w2_, &b2_, &head_w_, &head_b_, &absent_};
}

Tensor image_descriptor(const ingest::ImagePatch& patch, std::size_t bins) {
  const std::size_t pixels = patch.height * patch.width;
  if (pixels == 0 || patch.pixels.size() != pixels * 3) {
    throw DimensionError("image_descriptor: patch has " + std::to_string(patch.pixels.size()) +
                         " values for " + std::to_string(patch.height) + "x" + std::to_string(patch.width) + "x3");
  }
  Tensor out({3 * bins + 6});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double mean = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = std::clamp(patch.pixels[p * 3 + ch], 0.0, 1.0);
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
      out[ch * bins + bin] += 1.0;
      mean += v;
    }
    mean /= static_cast<double>(pixels);
    double var = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double dv = std::clamp(patch.pixels[p * 3 + ch], 0.0, 1.0) - mean;
      var += dv * dv;
    }
    for (std::size_t b = 0; b < bins; ++b) out[ch * bins + b] /= static_cast<double>(pixels);
    out[3 * bins + ch] = mean;
    out[3 * bins + 3 + ch] = std::sqrt(var / static_cast<double>(pixels));
  }
  return out;
}

ImageEncoder::ImageEncoder(ImageEncoderConfig config, std::mt19937_64& rng, const std::string& prefix)
    : config_(config) {
  const std::size_t in = descriptor_size();
  w1_ = make_weight(prefix + ".head1.weight", config_.hidden, in, rng);
  b1_ = make_bias(prefix + ".head1.bias", config_.hidden, in, rng);
  w2_ = make_weight(prefix + ".head2.weight", config_.feature_dim, config_.hidden, rng);
  b2_ = make_bias(prefix + ".head2.bias", config_.feature_dim, config_.hidden, rng);
}

Var ImageEncoder::encode_descriptors(Tape& tape, const Tensor& descriptors) {
  if (descriptors.rank() != 2 || descriptors.rows() != descriptor_size()) {
    throw DimensionError("encode_image: descriptors " + descriptors.shape_string() + " expected " +
                         std::to_string(descriptor_size()) + " rows");
  }
  Var x = tape.constant(descriptors);
  Var h = diff::relu(diff::linear(x, tape.param(w1_), tape.param(b1_)));
  return diff::linear(h, tape.param(w2_), tape.param(b2_));
}

Var ImageEncoder::encode(Tape& tape, std::span<const ingest::ImagePatch> patches) {
  const std::size_t k = patches.size();
  const std::size_t n = descriptor_size();
  Tensor desc({n, k});
  for (std::size_t d = 0; d < k; ++d) {
    const Tensor v = image_descriptor(patches[d], config_.bins);
    for (std::size_t i = 0; i < n; ++i) desc[i * k + d] = v[i];
  }
  return encode_descriptors(tape, desc);
}

std::vector<Parameter*> ImageEncoder::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

Var global_average_pool(const Var& level) {
  const Tensor& v = level.value();
  if (v.rank() != 3) throw DimensionError("global_average_pool: expected C x H x W, got " + v.shape_string());
  const std::size_t c = v.dim(0);
  const std::size_t hw = v.dim(1) * v.dim(2);
  if (hw == 0) throw DimensionError("global_average_pool: empty spatial extent");
  Var flat = diff::reshape(level, {c, hw});
  const diff::Segment all[] = {{0, hw}};
  return diff::segment_mean(flat, all);
}

SkipPool::SkipPool(std::mt19937_64& rng, std::size_t projection_dim, const std::string& prefix)
    : projection_dim_(projection_dim) {
  for (std::size_t l = 0; l < 4; ++l) {
    const std::string p = prefix + ".level" + std::to_string(l);
    const std::size_t c = kLevelChannels[l];
    Level level{make_weight(p + ".conv1.weight", kLevelWidth, c, rng), make_bias(p + ".conv1.bias", kLevelWidth, c, rng),
                make_weight(p + ".conv2.weight", kLevelWidth, kLevelWidth, rng),
                make_bias(p + ".conv2.bias", kLevelWidth, kLevelWidth, rng)};
    levels_.push_back(std::move(level));
  }
  if (projection_dim_ > 0) {
    proj_w_ = make_weight(prefix + ".proj.weight", projection_dim_, kOutputWidth, rng);
    proj_b_ = make_bias(prefix + ".proj.bias", projection_dim_, kOutputWidth, rng);
  }
}

Var SkipPool::encode(Tape& tape, std::span<const Tensor> levels) {
  if (levels.size() != 4) throw DimensionError("skip_pool: expected 4 levels, got " + std::to_string(levels.size()));
  std::vector<Var> pooled;
  for (std::size_t l = 0; l < 4; ++l) {
    if (levels[l].rank() != 3 || levels[l].dim(0) != kLevelChannels[l]) {
      throw DimensionError("skip_pool: level " + std::to_string(l) + " must have " +
                           std::to_string(kLevelChannels[l]) + " channels, got " + levels[l].shape_string());
    }
    Level& lv = levels_[l];
    Var g = global_average_pool(tape.constant(levels[l]));
    Var h = diff::relu(diff::layer_norm_cols(diff::linear(g, tape.param(lv.w1), tape.param(lv.b1))));
    h = diff::relu(diff::layer_norm_cols(diff::linear(h, tape.param(lv.w2), tape.param(lv.b2))));
    pooled.push_back(h);
  }
  Var out = diff::concat(pooled, 0);
  if (projection_dim_ > 0) out = diff::linear(out, tape.param(proj_w_), tape.param(proj_b_));
  return out;
}

std::vector<Parameter*> SkipPool::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : levels_) {
    out.push_back(&l.w1);
    out.push_back(&l.b1);
    out.push_back(&l.w2);
    out.push_back(&l.b2);
  }
  if (projection_dim_ > 0) {
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
  }
  return out;
}

void write_feature_cache(std::ostream& out, std::span<const FeatureCacheEntry> entries) {
  out << kFeatureCacheHeader << '\n';
  char buf[40];
  for (const auto& e : entries) {
    const std::size_t d = e.features.rows();
    const std::size_t n = e.features.cols();
    out << "frame " << e.frame << " modality " << to_string(e.modality) << " dim " << d << " count " << n << '\n';
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < d; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", e.features[i * n + k]);
        if (i) out << ' ';
        out << buf;
      }
      out << '\n';
    }
  }
}

std::vector<FeatureCacheEntry> read_feature_cache(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || line != kFeatureCacheHeader) throw ParseError("feature cache: missing header", 1);
  std::vector<FeatureCacheEntry> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string k_frame, k_mod, mod, k_dim, k_count;
    FeatureCacheEntry e;
    std::size_t d = 0, n = 0;
    if (!(hs >> k_frame >> e.frame >> k_mod >> mod >> k_dim >> d >> k_count >> n) || k_frame != "frame" ||
        k_mod != "modality" || k_dim != "dim" || k_count != "count") {
      throw ParseError("feature cache: bad entry header", line_no);
    }
    e.modality = modality_from_string(mod);
    e.features = Tensor({d, n});
    for (std::size_t k = 0; k < n; ++k) {
      if (!std::getline(in, line)) throw ParseError("feature cache: truncated entry", line_no);
      ++line_no;
      std::istringstream rs(line);
      for (std::size_t i = 0; i < d; ++i) {
        if (!(rs >> e.features[i * n + k])) throw ParseError("feature cache: short row", line_no);
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mmtrack::features
