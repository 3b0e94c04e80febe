#include "mmtrack/ingest/kitti.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mmtrack/errors.hpp"
#include "mmtrack/io_util.hpp"

namespace mmtrack::ingest {
namespace {

constexpr std::size_t kColumnsNoScore = 17;
constexpr std::size_t kColumnsWithScore = 18;

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& tok, int line, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError(std::string("bad ") + what + " value '" + tok + "'", line);
  return v;
}

int to_int(const std::string& tok, int line, const char* what) {
  int v = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw ParseError(std::string("bad ") + what + " value '" + tok + "'", line);
  return v;
}

void append_fixed(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out += buf;
}

}  // namespace

std::vector<LabelRecord> parse_labels(std::istream& in) {
  std::vector<LabelRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != kColumnsNoScore && tok.size() != kColumnsWithScore) {
      throw ParseError("expected 17 or 18 columns, found " + std::to_string(tok.size()), line_no);
    }
    LabelRecord r;
    r.frame = to_int(tok[0], line_no, "frame");
    r.track_id = to_int(tok[1], line_no, "track id");
    r.type = tok[2];
    r.truncated = to_int(tok[3], line_no, "truncated");
    r.occluded = to_int(tok[4], line_no, "occluded");
    r.alpha = to_double(tok[5], line_no, "alpha");
    r.box2d = {to_double(tok[6], line_no, "bbox"), to_double(tok[7], line_no, "bbox"),
               to_double(tok[8], line_no, "bbox"), to_double(tok[9], line_no, "bbox")};
    r.box3d.height = to_double(tok[10], line_no, "height");
    r.box3d.width = to_double(tok[11], line_no, "width");
    r.box3d.length = to_double(tok[12], line_no, "length");
    r.box3d.x = to_double(tok[13], line_no, "location");
    r.box3d.y = to_double(tok[14], line_no, "location");
    r.box3d.z = to_double(tok[15], line_no, "location");
    r.box3d.rotation_y = to_double(tok[16], line_no, "rotation_y");
    if (tok.size() == kColumnsWithScore) r.score = to_double(tok[17], line_no, "score");
    if (r.frame < 0) throw ParseError("negative frame index", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_record(const LabelRecord& r) {
  std::string s = std::to_string(r.frame) + ' ' + std::to_string(r.track_id) + ' ' + r.type + ' ' +
                  std::to_string(r.truncated) + ' ' + std::to_string(r.occluded) + ' ';
  const double reals[] = {r.alpha,        r.box2d.left,  r.box2d.top,   r.box2d.right,     r.box2d.bottom,
                          r.box3d.height, r.box3d.width, r.box3d.length, r.box3d.x,        r.box3d.y,
                          r.box3d.z,      r.box3d.rotation_y};
  for (std::size_t i = 0; i < std::size(reals); ++i) {
    if (i) s += ' ';
    append_fixed(s, reals[i]);
  }
  if (r.score) {
    s += ' ';
    append_fixed(s, *r.score);
  }
  return s;
}

void write_tracks(std::span<const LabelRecord> records, std::ostream& out) {
  std::vector<const LabelRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) {
    if (r.track_id < 0 && !r.dont_care()) {
      throw ContractError("write_tracks: record in frame " + std::to_string(r.frame) + " has no track id");
    }
    sorted.push_back(&r);
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const LabelRecord* a, const LabelRecord* b) {
    if (a->frame != b->frame) return a->frame < b->frame;
    return a->track_id < b->track_id;
  });
  for (const auto* r : sorted) out << format_record(*r) << '\n';
}

Calibration parse_calib(std::istream& in) {
  std::map<std::string, std::vector<double>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    std::string key = tok[0];
    if (!key.empty() && key.back() == ':') key.pop_back();
    std::vector<double> values;
    for (std::size_t i = 1; i < tok.size(); ++i) values.push_back(to_double(tok[i], line_no, key.c_str()));
    entries[key] = std::move(values);
  }
  auto find = [&](std::initializer_list<const char*> keys, std::size_t count) -> const std::vector<double>& {
    for (const char* k : keys) {
      auto it = entries.find(k);
      if (it == entries.end()) continue;
      if (it->second.size() != count) {
        throw ParseError(std::string("calibration key ") + k + " expects " + std::to_string(count) + " values");
      }
      return it->second;
    }
    throw ParseError(std::string("calibration missing key ") + *keys.begin());
  };

  Calibration c;
  const auto& p2 = find({"P2"}, 12);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) c.projection[i][j] = p2[i * 4 + j];
  const auto& r0 = find({"R0_rect", "R_rect"}, 9);
  c.rectification = identity4();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c.rectification[i][j] = r0[i * 3 + j];
  const auto& tr = find({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);
  c.velo_to_cam = identity4();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) c.velo_to_cam[i][j] = tr[i * 4 + j];
  return c;
}

void write_calib(const Calibration& c, std::ostream& out) {
  std::string s = "P2:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      s += ' ';
      append_fixed(s, c.projection[i][j]);
    }
  s += "\nR0_rect:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      s += ' ';
      append_fixed(s, c.rectification[i][j]);
    }
  s += "\nTr_velo_to_cam:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      s += ' ';
      append_fixed(s, c.velo_to_cam[i][j]);
    }
  out << s << '\n';
}

PointCloud read_point_cloud(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kPointBytes = 16;
  if (bytes.size() % kPointBytes != 0) {
    throw ParseError("point cloud length " + std::to_string(bytes.size()) + " is not a multiple of 16 bytes");
  }
  const std::size_t n = bytes.size() / kPointBytes;
  PointCloud cloud;
  cloud.points = diff::Tensor({n, 4});
  for (std::size_t i = 0; i < n * 4; ++i) {
    std::uint32_t raw = 0;
    for (int b = 0; b < 4; ++b) {
      raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    }
    cloud.points[i] = static_cast<double>(std::bit_cast<float>(raw));
  }
  return cloud;
}

void write_point_cloud(const PointCloud& cloud, std::ostream& out) {
  const auto values = cloud.points.values();
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto raw = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((raw >> (8 * b)) & 0xFFu);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Detection> filter_detections(std::span<const Detection> dets, double min_score) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.score >= min_score) out.push_back(d);
  }
  return out;
}

void write_patches(const SequenceDataset& seq, std::ostream& out) {
  out << "mmtrack-patches 1\n";
  std::string s;
  for (const auto& f : seq.frames) {
    if (!f.patches) {
      out << "outage " << f.index << '\n';
      continue;
    }
    for (std::size_t d = 0; d < f.patches->size(); ++d) {
      const auto& p = (*f.patches)[d];
      s = std::to_string(f.index) + ' ' + std::to_string(d) + ' ' + std::to_string(p.height) + ' ' +
          std::to_string(p.width);
      for (double v : p.pixels) {
        s += ' ';
        append_fixed(s, v);
      }
      out << s << '\n';
    }
  }
}

namespace {

struct PatchTable {
  std::map<int, std::map<std::size_t, ImagePatch>> patches;
  std::vector<int> outages;
};

PatchTable read_patches(std::istream& in) {
  PatchTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (line_no == 1) {
      if (tok.size() != 2 || tok[0] != "mmtrack-patches") throw ParseError("patch file missing header", line_no);
      continue;
    }
    if (tok[0] == "outage") {
      if (tok.size() != 2) throw ParseError("bad outage line", line_no);
      table.outages.push_back(to_int(tok[1], line_no, "frame"));
      continue;
    }
    if (tok.size() < 4) throw ParseError("bad patch line", line_no);
    const int frame = to_int(tok[0], line_no, "frame");
    const auto det = static_cast<std::size_t>(to_int(tok[1], line_no, "detection"));
    ImagePatch p;
    p.height = static_cast<std::size_t>(to_int(tok[2], line_no, "height"));
    p.width = static_cast<std::size_t>(to_int(tok[3], line_no, "width"));
    if (tok.size() != 4 + p.height * p.width * 3) throw ParseError("patch pixel count mismatch", line_no);
    for (std::size_t i = 4; i < tok.size(); ++i) p.pixels.push_back(to_double(tok[i], line_no, "pixel"));
    table.patches[frame][det] = std::move(p);
  }
  return table;
}

std::string frame_file(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.bin", frame);
  return buf;
}

}  // namespace

void save_dataset(const std::filesystem::path& root, std::span<const SequenceDataset> sequences) {
  namespace fs = std::filesystem;
  for (const auto& seq : sequences) {
    seq.validate();
    std::vector<LabelRecord> dets;
    std::vector<LabelRecord> labels;
    for (const auto& f : seq.frames) {
      for (const auto& d : f.detections) {
        LabelRecord r = to_record(d, -1);
        r.type = d.class_label;
        dets.push_back(r);
      }
      labels.insert(labels.end(), f.labels.begin(), f.labels.end());
    }
    // Detections keep their in-frame order; that order indexes the patch file.
    write_file_atomically(root / "det_02" / (seq.name + ".txt"), [&](std::ostream& out) {
      for (const auto& r : dets) out << format_record(r) << '\n';
    });
    if (seq.has_ground_truth) {
      write_file_atomically(root / "label_02" / (seq.name + ".txt"),
                            [&](std::ostream& out) { write_tracks(labels, out); });
    }
    write_file_atomically(root / "calib" / (seq.name + ".txt"), [&](std::ostream& out) { write_calib(seq.calib, out); });
    write_file_atomically(root / "patches" / (seq.name + ".txt"), [&](std::ostream& out) { write_patches(seq, out); });
    const fs::path velo_dir = root / "velodyne" / seq.name;
    fs::create_directories(velo_dir);
    for (const auto& f : seq.frames) {
      if (!f.cloud) continue;
      write_file_atomically(velo_dir / frame_file(f.index), [&](std::ostream& out) { write_point_cloud(*f.cloud, out); });
    }
  }
}

std::vector<std::string> list_sequences(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::path dir = root / "det_02";
  if (!fs::is_directory(dir)) dir = root / "label_02";
  if (!fs::is_directory(dir)) throw ParseError("dataset " + root.string() + " has neither det_02/ nor label_02/");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<SequenceDataset> load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<SequenceDataset> out;
  for (const auto& name : list_sequences(root)) {
    SequenceDataset seq;
    seq.name = name;
    std::map<int, Frame> frames;
    auto frame_at = [&](int idx) -> Frame& {
      Frame& f = frames[idx];
      f.index = idx;
      return f;
    };

    const fs::path det_path = root / "det_02" / (name + ".txt");
    if (fs::exists(det_path)) {
      std::ifstream in(det_path);
      for (const auto& r : parse_labels(in)) frame_at(r.frame).detections.push_back(r.to_detection());
    }
    const fs::path label_path = root / "label_02" / (name + ".txt");
    if (fs::exists(label_path)) {
      seq.has_ground_truth = true;
      std::ifstream in(label_path);
      for (auto& r : parse_labels(in)) frame_at(r.frame).labels.push_back(std::move(r));
    }
    const fs::path calib_path = root / "calib" / (name + ".txt");
    if (fs::exists(calib_path)) {
      std::ifstream in(calib_path);
      seq.calib = parse_calib(in);
    }
    const fs::path velo_dir = root / "velodyne" / name;
    if (fs::is_directory(velo_dir)) {
      for (const auto& e : fs::directory_iterator(velo_dir)) {
        if (e.path().extension() != ".bin") continue;
        const int idx = to_int(e.path().stem().string(), 0, "velodyne frame");
        std::ifstream in(e.path(), std::ios::binary);
        frame_at(idx).cloud = read_point_cloud(in);
      }
    }
    if (!frames.empty()) {
      const int last = frames.rbegin()->first;
      for (int i = 0; i <= last; ++i) frame_at(i);
    }
    const fs::path patch_path = root / "patches" / (name + ".txt");
    if (fs::exists(patch_path)) {
      std::ifstream in(patch_path);
      PatchTable table = read_patches(in);
      for (int idx : table.outages) frame_at(idx);
      for (auto& [idx, f] : frames) {
        if (std::find(table.outages.begin(), table.outages.end(), idx) != table.outages.end()) continue;
        std::vector<ImagePatch> patches;
        auto& row = table.patches[idx];
        for (std::size_t d = 0; d < f.detections.size(); ++d) {
          auto it = row.find(d);
          if (it == row.end()) {
            throw ParseError("sequence " + name + ": frame " + std::to_string(idx) + " detection " +
                             std::to_string(d) + " has no image patch");
          }
          patches.push_back(std::move(it->second));
        }
        f.patches = std::move(patches);
      }
    }
    for (auto& [idx, f] : frames) seq.frames.push_back(std::move(f));
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace mmtrack::ingest
