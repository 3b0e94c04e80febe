#include "mmtrack/ingest/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>
#include <random>

#include "mmtrack/errors.hpp"

namespace mmtrack::ingest {
namespace {

constexpr double kImageWidth = 1242.0;
constexpr double kImageHeight = 375.0;
constexpr double kGroundY = 1.65;

struct ObjectState {
  int id = 0;
  double x = 0, z = 0, vx = 0, vz = 0;
  double height = 1.5, width = 1.7, length = 4.0, rotation_y = 0.0;
  std::array<double, 3> color{};
  double reflectance = 0.5;
  int birth = 0;
  int death = 0;
};

bool in_any(const std::vector<FrameInterval>& intervals, int frame) {
  return std::any_of(intervals.begin(), intervals.end(), [frame](const auto& iv) { return iv.contains(frame); });
}

std::array<double, 3> hue_to_rgb(double hue) {
  const double h = std::fmod(hue, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  const double v = 0.9;
  const double lo = 0.1;
  auto mix = [&](double r, double g, double b) {
    return std::array<double, 3>{lo + (v - lo) * r, lo + (v - lo) * g, lo + (v - lo) * b};
  };
  switch (static_cast<int>(h)) {
    case 0: return mix(1, x, 0);
    case 1: return mix(x, 1, 0);
    case 2: return mix(0, 1, x);
    case 3: return mix(0, x, 1);
    case 4: return mix(x, 0, 1);
    default: return mix(1, 0, x);
  }
}

Box2d project_box(const Calibration& calib, const Box3d& b) {
  const double c = std::cos(b.rotation_y);
  const double s = std::sin(b.rotation_y);
  double left = 1e18, top = 1e18, right = -1e18, bottom = -1e18;
  for (int i = 0; i < 8; ++i) {
    const double dx = ((i & 1) ? 0.5 : -0.5) * b.length;
    const double dz = ((i & 2) ? 0.5 : -0.5) * b.width;
    const double dy = (i & 4) ? -b.height : 0.0;
    const std::array<double, 3> p{b.x + c * dx + s * dz, b.y + dy, b.z - s * dx + c * dz};
    const auto uv = calib.project(p);
    left = std::min(left, uv[0]);
    right = std::max(right, uv[0]);
    top = std::min(top, uv[1]);
    bottom = std::max(bottom, uv[1]);
  }
  return {left, top, right, bottom};
}

}  // namespace

void ScenarioConfig::validate() const {
  if (frames <= 0) throw ConfigError("scenario: frame count must be positive");
  if (objects <= 0) throw ConfigError("scenario: object count must be positive");
  if (patch_size <= 0) throw ConfigError("scenario: patch_size must be positive");
  if (points_per_object <= 0) throw ConfigError("scenario: points_per_object must be positive");
  if (background_points < 0) throw ConfigError("scenario: background_points must be >= 0");
  for (double v : {max_speed, motion_noise, box_noise, false_positive_rate, miss_rate, image_noise, cloud_noise,
                   turnover, lane_spacing}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("scenario: noise levels and rates must be finite and >= 0");
  }
  if (min_depth <= 0.0 || max_depth < min_depth) throw ConfigError("scenario: invalid depth range");
  if (miss_rate > 1.0 || turnover > 1.0) throw ConfigError("scenario: rates must be <= 1");
}

ScenarioConfig ScenarioConfig::noiseless() const {
  ScenarioConfig c = *this;
  c.motion_noise = 0.0;
  c.box_noise = 0.0;
  c.false_positive_rate = 0.0;
  c.miss_rate = 0.0;
  c.image_noise = 0.0;
  c.cloud_noise = 0.0;
  return c;
}

Calibration synthetic_calibration() {
  Calibration c;
  c.projection = {{{720.0, 0.0, 621.0, 0.0}, {0.0, 720.0, 187.5, 0.0}, {0.0, 0.0, 1.0, 0.0}}};
  c.rectification = identity4();
  // LiDAR x forward, y left, z up; camera x right, y down, z forward.
  c.velo_to_cam = {{{0.0, -1.0, 0.0, 0.0}, {0.0, 0.0, -1.0, -0.08}, {1.0, 0.0, 0.0, -0.27}, {0.0, 0.0, 0.0, 1.0}}};
  return c;
}

SequenceDataset generate_synthetic(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SequenceDataset seq;
  seq.name = cfg.name;
  seq.calib = synthetic_calibration();
  seq.has_ground_truth = true;
  const Mat44 cam_to_velo = rigid_inverse(seq.calib.velo_to_cam);

  std::vector<int> lanes(static_cast<std::size_t>(cfg.objects));
  for (int i = 0; i < cfg.objects; ++i) lanes[i] = i;
  std::shuffle(lanes.begin(), lanes.end(), rng);
  const double hue_offset = unit(rng);

  std::vector<ObjectState> objects;
  for (int i = 0; i < cfg.objects; ++i) {
    ObjectState o;
    o.id = i;
    o.x = (lanes[i] - 0.5 * (cfg.objects - 1)) * cfg.lane_spacing + uniform(-0.3, 0.3);
    const double near = std::max(cfg.min_depth, std::abs(o.x) / 0.75);
    o.z = uniform(near, std::max(near, cfg.max_depth));
    o.vz = uniform(-cfg.max_speed, cfg.max_speed);
    o.vx = uniform(-0.1, 0.1) * cfg.max_speed;
    o.height = uniform(1.4, 1.7);
    o.width = uniform(1.5, 1.9);
    o.length = uniform(3.5, 4.6);
    o.rotation_y = uniform(-std::numbers::pi, std::numbers::pi);
    o.color = hue_to_rgb(hue_offset + static_cast<double>(i) / cfg.objects);
    o.reflectance = uniform(0.1, 0.9);
    o.birth = 0;
    o.death = cfg.frames - 1;
    if (unit(rng) < cfg.turnover) {
      if (unit(rng) < 0.5) o.birth = static_cast<int>(uniform(1, std::max(1, cfg.frames / 2)));
      else o.death = static_cast<int>(uniform(cfg.frames / 2, cfg.frames - 1));
    }
    objects.push_back(o);
  }

  const auto patch_len = static_cast<std::size_t>(cfg.patch_size * cfg.patch_size * 3);
  auto make_patch = [&](const std::array<double, 3>& color, double noise, bool corrupt) {
    ImagePatch p;
    p.height = p.width = static_cast<std::size_t>(cfg.patch_size);
    p.pixels.resize(patch_len);
    for (std::size_t i = 0; i < patch_len; ++i) {
      const double v = corrupt ? unit(rng) : color[i % 3] + noise * gauss(rng);
      p.pixels[i] = std::clamp(v, 0.0, 1.0);
    }
    return p;
  };

  for (int f = 0; f < cfg.frames; ++f) {
    Frame frame;
    frame.index = f;
    const bool image_corrupt = in_any(cfg.image_corruptions, f);
    const bool cloud_corrupt = in_any(cfg.cloud_corruptions, f);
    std::vector<Detection> dets;
    std::vector<ImagePatch> patches;
    std::vector<double> cloud_values;
    auto push_point = [&](double cx, double cy, double cz, double refl) {
      const std::array<double, 4> p{cx, cy, cz, 1.0};
      for (int r = 0; r < 3; ++r) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += cam_to_velo[r][k] * p[k];
        cloud_values.push_back(v);
      }
      cloud_values.push_back(std::clamp(refl, 0.0, 1.0));
    };

    for (auto& o : objects) {
      if (f < o.birth || f > o.death) continue;
      Box3d b3{o.height, o.width, o.length, o.x, kGroundY, o.z, o.rotation_y};
      LabelRecord gt;
      gt.frame = f;
      gt.track_id = o.id;
      gt.type = "Car";
      gt.truncated = 0;
      gt.occluded = 0;
      gt.box3d = b3;
      gt.alpha = o.rotation_y - std::atan2(o.x, o.z);
      gt.box2d = project_box(seq.calib, b3);
      frame.labels.push_back(gt);

      for (int p = 0; p < cfg.points_per_object; ++p) {
        double px = o.x + 0.25 * o.width * gauss(rng) + cfg.cloud_noise * gauss(rng);
        double py = kGroundY - 0.5 * o.height + 0.25 * o.height * gauss(rng) + cfg.cloud_noise * gauss(rng);
        double pz = o.z + 0.25 * o.length * gauss(rng) + cfg.cloud_noise * gauss(rng);
        push_point(px, py, pz, o.reflectance + cfg.cloud_noise * gauss(rng));
      }

      if (cfg.miss_rate > 0.0 && unit(rng) < cfg.miss_rate) continue;
      Detection d;
      d.frame = f;
      d.box2d = gt.box2d;
      if (cfg.box_noise > 0.0) {
        d.box2d.left += cfg.box_noise * gauss(rng);
        d.box2d.top += cfg.box_noise * gauss(rng);
        d.box2d.right += cfg.box_noise * gauss(rng);
        d.box2d.bottom += cfg.box_noise * gauss(rng);
        if (d.box2d.right <= d.box2d.left + 1.0) d.box2d.right = d.box2d.left + 1.0;
        if (d.box2d.bottom <= d.box2d.top + 1.0) d.box2d.bottom = d.box2d.top + 1.0;
      }
      d.box3d = b3;
      d.score = uniform(0.7, 1.0);
      d.class_label = "Car";
      dets.push_back(d);
      patches.push_back(make_patch(o.color, cfg.image_noise, image_corrupt));
    }

    if (cfg.false_positive_rate > 0.0) {
      std::poisson_distribution<int> fp_count(cfg.false_positive_rate);
      const int n_fp = fp_count(rng);
      for (int i = 0; i < n_fp; ++i) {
        const double z = uniform(cfg.min_depth, cfg.max_depth);
        const double x = uniform(-0.7, 0.7) * z;
        Box3d b3{uniform(1.4, 1.7), uniform(1.5, 1.9), uniform(3.5, 4.6), x, kGroundY, z, uniform(-3.0, 3.0)};
        Detection d;
        d.frame = f;
        d.box2d = project_box(seq.calib, b3);
        d.box3d = b3;
        d.score = uniform(0.3, 0.6);
        dets.push_back(d);
        patches.push_back(make_patch(hue_to_rgb(unit(rng)), std::max(cfg.image_noise, 0.1), image_corrupt));
        for (int p = 0; p < cfg.points_per_object / 4; ++p) {
          push_point(x + 1.5 * gauss(rng), kGroundY - 0.5 + 0.3 * gauss(rng), z + 1.5 * gauss(rng), unit(rng));
        }
      }
    }

    for (int p = 0; p < cfg.background_points; ++p) {
      push_point(uniform(-20.0, 20.0), kGroundY + 0.05 * gauss(rng), uniform(3.0, 50.0), uniform(0.0, 0.3));
    }

    // Detector output order carries no identity information.
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) frame.detections.push_back(dets[i]);
    if (!in_any(cfg.image_outages, f)) {
      std::vector<ImagePatch> ordered;
      for (auto i : order) ordered.push_back(patches[i]);
      frame.patches = std::move(ordered);
    }
    if (cloud_corrupt) {
      // Extrinsic misalignment: a random yaw about the LiDAR up axis sends each object's
      // returns into some other detection's frustum, or none.
      const double yaw = (unit(rng) < 0.5 ? -1.0 : 1.0) * uniform(0.15, 0.45);
      const double c = std::cos(yaw);
      const double sn = std::sin(yaw);
      for (std::size_t i = 0; i + 4 <= cloud_values.size(); i += 4) {
        const double x = cloud_values[i];
        const double y = cloud_values[i + 1];
        cloud_values[i] = c * x - sn * y;
        cloud_values[i + 1] = sn * x + c * y;
      }
    }
    if (!in_any(cfg.cloud_outages, f)) {
      PointCloud cloud;
      const std::size_t n = cloud_values.size() / 4;
      cloud.points = diff::Tensor({n, 4}, std::move(cloud_values));
      frame.cloud = std::move(cloud);
    }
    seq.frames.push_back(std::move(frame));

    for (auto& o : objects) {
      o.vx += cfg.motion_noise * gauss(rng);
      o.vz += cfg.motion_noise * gauss(rng);
      o.x += o.vx;
      o.z = std::max(2.0, o.z + o.vz);
    }
  }
  seq.validate();
  return seq;
}

namespace {

using nlohmann::json;

json intervals_to_json(const std::vector<FrameInterval>& v) {
  json out = json::array();
  for (const auto& iv : v) out.push_back({iv.first, iv.last});
  return out;
}

std::vector<FrameInterval> intervals_from_json(const json& j) {
  std::vector<FrameInterval> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("scenario: intervals are [first, last] pairs");
    out.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return out;
}

}  // namespace

ScenarioConfig scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  if (j.contains("scenario")) j = j["scenario"];
  ScenarioConfig c;
  try {
    c.name = j.value("name", c.name);
    c.frames = j.value("frames", c.frames);
    c.objects = j.value("objects", c.objects);
    c.seed = j.value("seed", c.seed);
    c.max_speed = j.value("max_speed", c.max_speed);
    c.motion_noise = j.value("motion_noise", c.motion_noise);
    c.lane_spacing = j.value("lane_spacing", c.lane_spacing);
    c.min_depth = j.value("min_depth", c.min_depth);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.turnover = j.value("turnover", c.turnover);
    c.box_noise = j.value("box_noise", c.box_noise);
    c.false_positive_rate = j.value("false_positive_rate", c.false_positive_rate);
    c.miss_rate = j.value("miss_rate", c.miss_rate);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.image_noise = j.value("image_noise", c.image_noise);
    c.points_per_object = j.value("points_per_object", c.points_per_object);
    c.background_points = j.value("background_points", c.background_points);
    c.cloud_noise = j.value("cloud_noise", c.cloud_noise);
    if (j.contains("image_outages")) c.image_outages = intervals_from_json(j["image_outages"]);
    if (j.contains("cloud_outages")) c.cloud_outages = intervals_from_json(j["cloud_outages"]);
    if (j.contains("image_corruptions")) c.image_corruptions = intervals_from_json(j["image_corruptions"]);
    if (j.contains("cloud_corruptions")) c.cloud_corruptions = intervals_from_json(j["cloud_corruptions"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  if (j.value("noiseless", false)) c = c.noiseless();
  c.validate();
  return c;
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json j{{"name", c.name},
         {"frames", c.frames},
         {"objects", c.objects},
         {"seed", c.seed},
         {"max_speed", c.max_speed},
         {"motion_noise", c.motion_noise},
         {"lane_spacing", c.lane_spacing},
         {"min_depth", c.min_depth},
         {"max_depth", c.max_depth},
         {"turnover", c.turnover},
         {"box_noise", c.box_noise},
         {"false_positive_rate", c.false_positive_rate},
         {"miss_rate", c.miss_rate},
         {"patch_size", c.patch_size},
         {"image_noise", c.image_noise},
         {"points_per_object", c.points_per_object},
         {"background_points", c.background_points},
         {"cloud_noise", c.cloud_noise},
         {"image_outages", intervals_to_json(c.image_outages)},
         {"cloud_outages", intervals_to_json(c.cloud_outages)},
         {"image_corruptions", intervals_to_json(c.image_corruptions)},
         {"cloud_corruptions", intervals_to_json(c.cloud_corruptions)}};
  return j.dump(2);
}

}  // namespace mmtrack::ingest
