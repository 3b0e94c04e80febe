#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mmtrack/io_util.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = MMTRACK_CLI_PATH;
const fs::path kData = MMTRACK_TEST_DATA;

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

struct Workdir {
  fs::path root;
  Workdir() {
    root = fs::temp_directory_path() / ("mmtrack_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "scene.json") << R"({"frames": 5, "objects": 2})";
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

std::string dir_bytes(const fs::path& dir) {
  std::string all;
  for (const char* sub : {"label_02", "det_02", "calib"}) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir / sub)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) all += f.filename().string() + mmtrack::read_text_file(f);
  }
  return all;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("synth --no-such-flag") == 2);
  CHECK(run("synth") == 2);
  CHECK(run("--version") == 0);
}

TEST_CASE("synth is reproducible from its seed") {
  Workdir w;
  REQUIRE(run("synth --config " + (w / "scene.json") + " --seed 3 --sequences 2 --out " + (w / "a")) == 0);
  REQUIRE(run("synth --config " + (w / "scene.json") + " --seed 3 --sequences 2 --out " + (w / "b")) == 0);
  REQUIRE(run("synth --config " + (w / "scene.json") + " --seed 4 --sequences 2 --out " + (w / "c")) == 0);
  CHECK(fs::is_regular_file(w.root / "a" / "label_02" / "0001.txt"));
  CHECK(dir_bytes(w.root / "a") == dir_bytes(w.root / "b"));
  CHECK(dir_bytes(w.root / "a") != dir_bytes(w.root / "c"));

  // A non-dataset directory is never overwritten.
  fs::create_directories(w.root / "keep");
  std::ofstream(w.root / "keep" / "notes.txt") << "x";
  CHECK(run("synth --config " + (w / "scene.json") + " --out " + (w / "keep")) == 2);
  CHECK(fs::is_regular_file(w.root / "keep" / "notes.txt"));
}

TEST_CASE("train, track and eval end to end") {
  Workdir w;
  REQUIRE(run("synth --config " + (w / "scene.json") + " --sequences 2 --out " + (w / "data")) == 0);
  REQUIRE(run("train --dataset " + (w / "data") + " --epochs 1 --out " + (w / "model.ckpt")) == 0);
  CHECK(fs::is_regular_file(w / "model.ckpt.model.json"));
  CHECK(fs::is_regular_file(w / "model.ckpt.loss.tsv"));
  REQUIRE(run("track --dataset " + (w / "data") + " --checkpoint " + (w / "model.ckpt") + " --out " +
              (w / "res")) == 0);
  CHECK(fs::is_regular_file(w.root / "res" / "0000.txt"));
  CHECK(run("track --dataset " + (w / "data") + " --checkpoint " + (w / "model.ckpt") +
            " --mask cloud-only --out " + (w / "res_cloud")) == 0);
  CHECK(run("eval --results " + (w / "res") + " --gt " + (w / "data") + " --out " + (w / "report.json")) == 0);
  CHECK(mmtrack::read_text_file(w.root / "report.json").find("\"MOTA\"") != std::string::npos);

  SUBCASE("missing checkpoint") {
    CHECK(run("track --dataset " + (w / "data") + " --checkpoint " + (w / "nope.ckpt") + " --out " +
              (w / "res2")) == 2);
  }
  SUBCASE("unknown mask preset") {
    CHECK(run("track --dataset " + (w / "data") + " --checkpoint " + (w / "model.ckpt") + " --mask radar --out " +
              (w / "res2")) == 2);
  }
  SUBCASE("sequence mismatch between results and ground truth") {
    fs::remove(w.root / "res" / "0001.txt");
    CHECK(run("eval --results " + (w / "res") + " --gt " + (w / "data")) == 3);
  }
  SUBCASE("missing dataset") {
    CHECK(run("train --dataset " + (w / "absent") + " --epochs 1 --out " + (w / "m2.ckpt")) == 3);
  }
}

TEST_CASE("eval on the label fixtures scores ground truth perfectly") {
  const std::string corpus = (kData / "kitti_corpus").string();
  CHECK(run("eval --results " + (kData / "kitti_corpus" / "label_02").string() + " --gt " + corpus) == 0);
}

TEST_CASE("lp-fuzz agrees with brute force") {
  CHECK(run("lp-fuzz --count 200 --seed 1") == 0);
  CHECK(run("lp-fuzz --count 0") == 2);
}

TEST_CASE("gradcheck runs a filtered subset and detects a corrupted backward pass") {
  CHECK(run("gradcheck --seeds 2 --only op.relu op.linear") == 0);
  CHECK(run("gradcheck --seeds 2 --only op.relu op.linear --corrupt-backward") == 1);
  CHECK(run("gradcheck --only no-such-item") == 2);
}
