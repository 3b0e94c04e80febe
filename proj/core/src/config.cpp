#include "mmtrack/tracker/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <nlohmann/json.hpp>

#include "mmtrack/errors.hpp"

namespace mmtrack::tracker {

using nlohmann::json;

void ModelConfig::validate() const {
  if (std::find(kFeatureDimOptions.begin(), kFeatureDimOptions.end(), feature_dim) == kFeatureDimOptions.end()) {
    throw ConfigError("model.feature_dim must be 64 or 512, got " + std::to_string(feature_dim));
  }
  if (point_hidden == 0 || image_hidden == 0 || image_bins == 0) {
    throw ConfigError("model: hidden widths and histogram bins must be positive");
  }
  if (loss.alpha < 0 || loss.gamma < 0 || loss.beta < 0) throw ConfigError("model.loss: weights must be >= 0");
  if (confidence_gate < 0 || confidence_gate > 1) throw ConfigError("model.thresholds.confidence_gate outside [0,1]");
  if (detection_filter < 0 || detection_filter > 1) {
    throw ConfigError("model.thresholds.detection_filter outside [0,1]");
  }
}

bool ModalitySet::contains(features::Modality m) const {
  switch (m) {
    case features::Modality::Image: return image;
    case features::Modality::Cloud: return cloud;
    case features::Modality::Fused: return image && cloud;
  }
  return false;
}

std::vector<features::Modality> ModalitySet::list() const {
  std::vector<features::Modality> out;
  if (image) out.push_back(features::Modality::Image);
  if (cloud) out.push_back(features::Modality::Cloud);
  return out;
}

std::string ModalitySet::to_string() const {
  if (image && cloud) return "image+cloud";
  if (image) return "image";
  if (cloud) return "cloud";
  return "none";
}

ModalitySet MaskSchedule::at(int frame) const {
  ModalitySet s = base;
  for (const auto& iv : intervals) {
    if (iv.frames.contains(frame)) s = iv.modalities;
  }
  return s;
}

MaskSchedule MaskSchedule::preset(const std::string& name) {
  MaskSchedule m;
  m.name = name;
  if (name == "all" || name == "fused") {
    m.base = {true, true};
  } else if (name == "lose-image" || name == "cloud-only") {
    m.base = {false, true};
  } else if (name == "lose-cloud" || name == "lose-point-cloud" || name == "image-only") {
    m.base = {true, false};
  } else {
    throw ConfigError("unknown mask preset '" + name +
                      "' (expected all, lose-image, lose-cloud, image-only, cloud-only)");
  }
  return m;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(section + ": unknown key '" + key + "'");
    }
  }
}

ModalitySet modalities_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("mask: modality lists are arrays of names");
  ModalitySet s{false, false};
  for (const auto& e : j) {
    const auto name = e.get<std::string>();
    if (name == "image") {
      s.image = true;
    } else if (name == "cloud") {
      s.cloud = true;
    } else {
      throw ConfigError("mask: unknown modality '" + name + "'");
    }
  }
  return s;
}

json modalities_to_json(const ModalitySet& s) {
  json out = json::array();
  if (s.image) out.push_back("image");
  if (s.cloud) out.push_back("cloud");
  return out;
}

MaskSchedule mask_from(const json& j) {
  if (j.is_string()) return MaskSchedule::preset(j.get<std::string>());
  reject_unknown(j, {"name", "base", "preset", "intervals"}, "mask");
  MaskSchedule m = j.contains("preset") ? MaskSchedule::preset(j["preset"].get<std::string>()) : MaskSchedule{};
  m.name = j.value("name", j.contains("preset") ? m.name : std::string("custom"));
  if (j.contains("base")) m.base = modalities_from_json(j["base"]);
  if (j.contains("intervals")) {
    for (const auto& e : j["intervals"]) {
      reject_unknown(e, {"frames", "modalities"}, "mask.intervals");
      const auto& f = e.at("frames");
      if (!f.is_array() || f.size() != 2) throw ConfigError("mask.intervals: frames must be [first, last]");
      m.intervals.push_back({{f[0].get<int>(), f[1].get<int>()}, modalities_from_json(e.at("modalities"))});
    }
  }
  return m;
}

json mask_json(const MaskSchedule& m) {
  json intervals = json::array();
  for (const auto& iv : m.intervals) {
    intervals.push_back({{"frames", {iv.frames.first, iv.frames.last}}, {"modalities", modalities_to_json(iv.modalities)}});
  }
  return {{"name", m.name}, {"base", modalities_to_json(m.base)}, {"intervals", intervals}};
}

json parse_document(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (training.epochs == 0) throw ConfigError("training.epochs must be positive");
  if (!(training.learning_rate > 0)) throw ConfigError("training.lr must be positive");
  if (training.time_budget < 0) throw ConfigError("training.time_budget must be >= 0");
  if (scenario) scenario->validate();
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_document(text, "config");
  RunConfig c;
  try {
    reject_unknown(j, {"paths", "model", "training", "mask", "scenario"}, "config");
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown(p, {"dataset", "checkpoint", "output", "ground_truth"}, "paths");
      c.paths.dataset = p.value("dataset", c.paths.dataset);
      c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
      c.paths.output = p.value("output", c.paths.output);
      c.paths.ground_truth = p.value("ground_truth", c.paths.ground_truth);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, {"feature_dim", "fusion", "correlation", "ranking", "loss", "thresholds", "point_hidden",
                         "image_hidden", "image_bins", "use_reflectivity"},
                     "model");
      auto& mc = c.model;
      mc.feature_dim = m.value("feature_dim", mc.feature_dim);
      if (m.contains("fusion")) {
        reject_unknown(m["fusion"], {"variant"}, "model.fusion");
        mc.fusion = fusion::variant_from_string(m["fusion"].value("variant", std::string("C")));
      }
      if (m.contains("correlation")) {
        reject_unknown(m["correlation"], {"op"}, "model.correlation");
        mc.scoring.op = adjacency::correlation_from_string(m["correlation"].value("op", std::string("abs_sub")));
      }
      if (m.contains("ranking")) {
        const auto& r = m["ranking"];
        reject_unknown(r, {"enabled", "combine"}, "model.ranking");
        mc.scoring.ranking = r.value("enabled", mc.scoring.ranking);
        if (r.contains("combine")) mc.scoring.combine = adjacency::combine_from_string(r["combine"].get<std::string>());
      }
      if (m.contains("loss")) {
        const auto& l = m["loss"];
        reject_unknown(l, {"alpha", "gamma", "beta"}, "model.loss");
        mc.loss.alpha = l.value("alpha", mc.loss.alpha);
        mc.loss.gamma = l.value("gamma", mc.loss.gamma);
        mc.loss.beta = l.value("beta", mc.loss.beta);
      }
      if (m.contains("thresholds")) {
        const auto& t = m["thresholds"];
        reject_unknown(t, {"confidence_gate", "detection_filter"}, "model.thresholds");
        mc.confidence_gate = t.value("confidence_gate", mc.confidence_gate);
        mc.detection_filter = t.value("detection_filter", mc.detection_filter);
      }
      mc.point_hidden = m.value("point_hidden", mc.point_hidden);
      mc.image_hidden = m.value("image_hidden", mc.image_hidden);
      mc.image_bins = m.value("image_bins", mc.image_bins);
      mc.use_reflectivity = m.value("use_reflectivity", mc.use_reflectivity);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      reject_unknown(t, {"epochs", "lr", "seed", "time_budget"}, "training");
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.learning_rate = t.value("lr", c.training.learning_rate);
      c.training.seed = t.value("seed", c.training.seed);
      c.training.time_budget = t.value("time_budget", c.training.time_budget);
    }
    if (j.contains("mask")) c.mask = mask_from(j["mask"]);
    if (j.contains("scenario")) c.scenario = ingest::scenario_from_json(j["scenario"].dump());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& m = c.model;
  json j;
  j["paths"] = {{"dataset", c.paths.dataset},
                {"checkpoint", c.paths.checkpoint},
                {"output", c.paths.output},
                {"ground_truth", c.paths.ground_truth}};
  j["model"] = {{"feature_dim", m.feature_dim},
                {"fusion", {{"variant", fusion::to_string(m.fusion)}}},
                {"correlation", {{"op", adjacency::to_string(m.scoring.op)}}},
                {"ranking", {{"enabled", m.scoring.ranking}, {"combine", adjacency::to_string(m.scoring.combine)}}},
                {"loss", {{"alpha", m.loss.alpha}, {"gamma", m.loss.gamma}, {"beta", m.loss.beta}}},
                {"thresholds", {{"confidence_gate", m.confidence_gate}, {"detection_filter", m.detection_filter}}},
                {"point_hidden", m.point_hidden},
                {"image_hidden", m.image_hidden},
                {"image_bins", m.image_bins},
                {"use_reflectivity", m.use_reflectivity}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"lr", c.training.learning_rate},
                   {"seed", c.training.seed},
                   {"time_budget", c.training.time_budget}};
  j["mask"] = mask_json(c.mask);
  if (c.scenario) j["scenario"] = json::parse(ingest::scenario_to_json(*c.scenario));
  return j.dump(2) + "\n";
}

MaskSchedule mask_from_json(const std::string& text) {
  const json j = parse_document(text, "mask");
  try {
    return mask_from(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mask: ") + e.what());
  }
}

std::string mask_to_json(const MaskSchedule& mask) { return mask_json(mask).dump(2) + "\n"; }

}  // namespace mmtrack::tracker
