#include "mmtrack/diff/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "mmtrack/errors.hpp"
#include "mmtrack/io_util.hpp"

namespace mmtrack::diff {

using nlohmann::json;

void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params) {
  json doc;
  doc["format"] = kCheckpointFormat;
  json& entries = doc["parameters"];
  entries = json::object();
  for (const Parameter* p : params) {
    if (entries.contains(p->name)) throw ContractError("checkpoint: duplicate parameter name '" + p->name + "'");
    entries[p->name] = {{"shape", p->value.shape()}, {"data", p->value.data()}};
  }
  out << doc.dump(1) << '\n';
}

void read_checkpoint(std::istream& in, std::span<Parameter* const> params) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (!doc.contains("format") || doc["format"] != kCheckpointFormat) {
    throw ParseError("checkpoint: missing or unsupported format tag");
  }
  const json& entries = doc.at("parameters");
  for (Parameter* p : params) {
    if (!entries.contains(p->name)) throw ParseError("checkpoint: missing parameter '" + p->name + "'");
    const json& e = entries.at(p->name);
    const auto shape = e.at("shape").get<Shape>();
    auto data = e.at("data").get<std::vector<double>>();
    if (shape != p->value.shape()) {
      throw ParseError("checkpoint: parameter '" + p->name + "' has shape " + to_string(shape) + ", model expects " +
                       p->value.shape_string());
    }
    p->value = Tensor(shape, std::move(data));
    p->grad = Tensor(shape, 0.0);
  }
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  write_file_atomically(path, [&](std::ostream& out) { write_checkpoint(out, params); });
}

void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  read_checkpoint(in, params);
}

}  // namespace mmtrack::diff
