#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mmtrack::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigFailure = 2, kDataFailure = 3 };

/// Flags shared by the config-driven commands; set flags win over the config file.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mask;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
};

struct SynthOptions {
  CommonOptions common;
  std::size_t sequences = 1;
  bool noiseless = false;
};

struct TrainOptions {
  CommonOptions common;
  std::string dataset;
  std::optional<double> time_budget;
};

struct TrackOptions {
  CommonOptions common;
  std::string dataset;
  std::string checkpoint;
};

struct EvalOptions {
  std::string results;
  std::string ground_truth;
  std::string out;
};

struct GradcheckOptions {
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  bool corrupt_backward = false;
  std::vector<std::string> only;
};

struct LpFuzzOptions {
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string replay;
};

int cmd_synth(const SynthOptions& options);
int cmd_train(const TrainOptions& options);
int cmd_track(const TrackOptions& options);
int cmd_eval(const EvalOptions& options);
int cmd_gradcheck(const GradcheckOptions& options);
int cmd_lpfuzz(const LpFuzzOptions& options);

}  // namespace mmtrack::cli
