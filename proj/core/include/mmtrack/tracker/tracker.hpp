#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmtrack/assoc/assoc.hpp"
#include "mmtrack/ingest/types.hpp"
#include "mmtrack/tracker/config.hpp"
#include "mmtrack/tracker/model.hpp"

namespace mmtrack::tracker {

struct Track {
  int id = -1;
  ingest::Detection last_detection;
  int age = 0;  // frames since the track started
};

struct TrackerState {
  std::vector<Track> active;  // parallel to `previous` detections
  int next_id = 0;
  FrameInputs previous;
  bool started = false;
};

/// Which boundary scores a window pads with zeros.
struct BoundaryPadding {
  bool start = false;  // no previous frame to link from
  bool end = false;    // no next frame to link to
};
BoundaryPadding pad_boundaries(std::size_t n, std::size_t m);

struct WindowResult {
  int prev_frame = -1;
  int cur_frame = -1;
  ModalitySet modalities;
  assoc::FlowProblem problem;
  assoc::AssignmentSolution solution;
};

/// Solver input from one slice's raw scores: sigmoid confidence (gated), link values as
/// produced by the heads, sigmoid start/end, zeros where padded.
assoc::FlowProblem flow_problem(const adjacency::SliceScores& scores, std::size_t n, std::size_t m, double gate);

/// Online two-frame tracker. Only detections kept by the solver carry into the next window.
class Tracker {
 public:
  Tracker(Model& model, MaskSchedule mask);

  /// Associates `cur` with the carried detections; returns the emitted records of `cur.frame`.
  std::vector<ingest::LabelRecord> step(const FrameInputs& cur);
  /// Closes the sequence with an empty current frame (end scores padded).
  void finish();

  const TrackerState& state() const noexcept { return state_; }
  const std::vector<WindowResult>& windows() const noexcept { return windows_; }

 private:
  assoc::AssignmentSolution solve(const FrameInputs& prev, const FrameInputs& cur);

  Model& model_;
  MaskSchedule mask_;
  TrackerState state_;
  std::vector<WindowResult> windows_;
};

struct SequenceResult {
  std::vector<ingest::LabelRecord> tracks;
  std::vector<WindowResult> windows;
};

SequenceResult run_sequence(const ingest::SequenceDataset& seq, Model& model, const MaskSchedule& mask);
SequenceResult run_sequence(std::span<const FrameInputs> frames, Model& model, const MaskSchedule& mask);

struct TrainStep {
  std::size_t step = 0;
  std::size_t epoch = 0;
  adjacency::LossBreakdown loss;
};

struct TrainResult {
  std::vector<TrainStep> curve;
  std::size_t epochs_completed = 0;
  bool stopped_by_budget = false;
};

/// Adam over consecutive-frame windows of every sequence, all slices supervised. Window
/// order is shuffled per epoch from the training seed. Throws ConfigError without labels.
TrainResult train_loop(Model& model, std::span<const ingest::SequenceDataset> sequences, const TrainingConfig& config,
                       const std::function<void(const TrainStep&)>& on_step = {});

}  // namespace mmtrack::tracker
