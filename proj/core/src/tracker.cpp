#include "mmtrack/tracker/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

namespace mmtrack::tracker {

using diff::Tape;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BoundaryPadding pad_boundaries(std::size_t n, std::size_t m) { return {n == 0, m == 0}; }

assoc::FlowProblem flow_problem(const adjacency::SliceScores& scores, std::size_t n, std::size_t m, double gate) {
  auto p = assoc::FlowProblem::zeros(n, m);
  std::vector<double> probs(n + m);
  const auto conf = scores.conf.value().values();
  for (std::size_t i = 0; i < n + m; ++i) probs[i] = sigmoid(conf[i]);
  p.theta_true = probs;
  if (n > 0 && m > 0) {
    const auto link = scores.link.value().values();
    p.theta_link.assign(link.begin(), link.end());
  }
  if (!scores.start_padded) {
    const auto s = scores.start.value().values();
    for (std::size_t k = 0; k < m; ++k) p.theta_start[k] = sigmoid(s[k]);
  }
  if (!scores.end_padded) {
    const auto e = scores.end.value().values();
    for (std::size_t j = 0; j < n; ++j) p.theta_end[j] = sigmoid(e[j]);
  }
  return assoc::apply_confidence_gate(std::move(p), probs, gate);
}

Tracker::Tracker(Model& model, MaskSchedule mask) : model_(model), mask_(std::move(mask)) {}

assoc::AssignmentSolution Tracker::solve(const FrameInputs& prev, const FrameInputs& cur) {
  const std::size_t n = prev.size(), m = cur.size();
  WindowResult w;
  w.prev_frame = prev.frame;
  w.cur_frame = cur.frame;
  w.problem = assoc::FlowProblem::zeros(n, m);
  if (n + m > 0) {
    w.modalities = window_modalities(prev, cur, mask_);
    if (w.modalities.empty()) {
      throw SensorFailureError("frames " + std::to_string(prev.frame) + "-" + std::to_string(cur.frame) +
                               ": no modality available");
    }
    Tape tape;
    const auto mods = w.modalities.list();
    const auto scores = model_.forward_inference(tape, mods, prev, cur);
    w.problem = flow_problem(scores, n, m, model_.config().confidence_gate);
  }
  w.solution = assoc::solve_exact(w.problem);
  windows_.push_back(w);
  return w.solution;
}

std::vector<ingest::LabelRecord> Tracker::step(const FrameInputs& cur) {
  FrameInputs empty_prev;
  empty_prev.frame = cur.frame - 1;
  const FrameInputs& prev = state_.started ? state_.previous : empty_prev;
  if (state_.started && cur.frame <= prev.frame) throw ContractError("Tracker::step: frames must increase");
  const std::size_t n = prev.size(), m = cur.size();
  const auto sol = solve(prev, cur);

  std::vector<ingest::LabelRecord> emitted;
  std::vector<std::size_t> kept;
  std::vector<Track> active;
  for (std::size_t k = 0; k < m; ++k) {
    if (!sol.y_true[n + k]) continue;
    Track t;
    t.last_detection = cur.detections[k];
    for (std::size_t j = 0; j < n; ++j) {
      if (sol.y_link[j * m + k]) {
        t.id = state_.active[j].id;
        t.age = state_.active[j].age + 1;
      }
    }
    if (t.id < 0) t.id = state_.next_id++;
    emitted.push_back(ingest::to_record(cur.detections[k], t.id));
    emitted.back().frame = cur.frame;
    kept.push_back(k);
    active.push_back(std::move(t));
  }
  state_.previous = cur.subset(kept);
  state_.active = std::move(active);
  state_.started = true;
  return emitted;
}

void Tracker::finish() {
  if (!state_.started) return;
  FrameInputs end;
  end.frame = state_.previous.frame + 1;
  solve(state_.previous, end);
  state_.previous = FrameInputs{};
  state_.active.clear();
  state_.started = false;
}

SequenceResult run_sequence(std::span<const FrameInputs> frames, Model& model, const MaskSchedule& mask) {
  SequenceResult out;
  Tracker tracker(model, mask);
  for (const auto& f : frames) {
    auto records = tracker.step(f);
    out.tracks.insert(out.tracks.end(), records.begin(), records.end());
  }
  tracker.finish();
  out.windows = tracker.windows();
  return out;
}

SequenceResult run_sequence(const ingest::SequenceDataset& seq, Model& model, const MaskSchedule& mask) {
  const auto frames = prepare_sequence(seq, model.config());
  return run_sequence(frames, model, mask);
}

TrainResult train_loop(Model& model, std::span<const ingest::SequenceDataset> sequences, const TrainingConfig& config,
                       const std::function<void(const TrainStep&)>& on_step) {
  if (sequences.empty()) throw ConfigError("train: no sequences");
  std::vector<std::vector<FrameInputs>> prepared;
  for (const auto& s : sequences) {
    if (!s.has_ground_truth) throw ConfigError("train: sequence " + s.name + " has no ground-truth labels");
    prepared.push_back(prepare_sequence(s, model.config()));
  }
  struct WindowRef {
    std::size_t seq, frame;
  };
  std::vector<WindowRef> windows;
  for (std::size_t s = 0; s < prepared.size(); ++s) {
    for (std::size_t i = 0; i + 1 < prepared[s].size(); ++i) {
      if (prepared[s][i].size() > 0 && prepared[s][i + 1].size() > 0) windows.push_back({s, i});
    }
  }
  if (windows.empty()) throw ConfigError("train: no window has detections in both frames");

  auto params = model.parameters();
  diff::zero_grads(params);
  diff::Adam adam({config.learning_rate});
  std::mt19937_64 rng(config.seed);
  const auto started = std::chrono::steady_clock::now();
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(windows.begin(), windows.end(), rng);
    for (const auto& w : windows) {
      if (config.time_budget > 0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        if (elapsed.count() > config.time_budget) {
          result.stopped_by_budget = true;
          return result;
        }
      }
      const FrameInputs& prev = prepared[w.seq][w.frame];
      const FrameInputs& cur = prepared[w.seq][w.frame + 1];
      const auto mods = prev.available().intersect(cur.available()).list();
      if (mods.empty()) continue;
      Tape tape;
      const auto scores = model.forward(tape, mods, prev, cur);
      const auto gt = adjacency::build_gt_association(prev.gt_ids, cur.gt_ids);
      const auto loss = adjacency::compute_loss(scores, gt, model.config().loss);
      if (!loss.total.valid()) continue;
      tape.backward(loss.total);
      adam.step(params);
      TrainStep ts{step++, epoch, loss.parts};
      result.curve.push_back(ts);
      if (on_step) on_step(ts);
    }
    result.epochs_completed = epoch + 1;
  }
  return result;
}

}  // namespace mmtrack::tracker
