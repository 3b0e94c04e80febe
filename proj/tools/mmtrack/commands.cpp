#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "log.hpp"
#include "mmtrack/assoc/assoc.hpp"
#include "mmtrack/checks/gradcheck_suite.hpp"
#include "mmtrack/errors.hpp"
#include "mmtrack/ingest/kitti.hpp"
#include "mmtrack/ingest/synthetic.hpp"
#include "mmtrack/io_util.hpp"
#include "mmtrack/metrics/metrics.hpp"
#include "mmtrack/tracker/config.hpp"
#include "mmtrack/tracker/tracker.hpp"

namespace mmtrack::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Maps library exceptions onto the exit-code contract.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log_error(e.what());
    return kConfigFailure;
  } catch (const ContractError& e) {
    log_error(e.what());
    return kConfigFailure;
  } catch (const ParseError& e) {
    log_error(e.what());
    return kDataFailure;
  } catch (const SensorFailureError& e) {
    log_error(e.what());
    return kDataFailure;
  } catch (const DegenerateDetectionError& e) {
    log_error(e.what());
    return kDataFailure;
  } catch (const DimensionError& e) {
    log_error(e.what());
    return kDataFailure;
  } catch (const fs::filesystem_error& e) {
    log_error(e.what());
    return kDataFailure;
  }
}

tracker::MaskSchedule parse_mask(const std::string& value) {
  if (fs::is_regular_file(value)) return tracker::mask_from_json(read_text_file(value));
  return tracker::MaskSchedule::preset(value);
}

tracker::RunConfig load_run_config(const CommonOptions& o) {
  tracker::RunConfig c;
  if (!o.config.empty()) c = tracker::run_config_from_json(read_text_file(o.config));
  if (o.seed) c.training.seed = *o.seed;
  if (o.epochs) c.training.epochs = *o.epochs;
  if (o.lr) c.training.learning_rate = *o.lr;
  if (!o.mask.empty()) c.mask = parse_mask(o.mask);
  c.validate();
  return c;
}

std::vector<ingest::SequenceDataset> load_sequences(const std::string& root) {
  if (root.empty()) throw ConfigError("no dataset given (--dataset or paths.dataset)");
  if (!fs::is_directory(root)) throw ParseError("dataset directory " + root + " does not exist");
  auto seqs = ingest::load_dataset(root);
  if (seqs.empty()) throw ParseError("dataset " + root + " contains no sequences");
  for (const auto& s : seqs) s.validate();
  return seqs;
}

fs::path model_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".model.json"); }

/// Dataset written beside the target and renamed into place. An existing target is only
/// replaced when it looks like a previous dataset.
void publish_dataset(const fs::path& out, std::span<const ingest::SequenceDataset> seqs) {
  if (fs::exists(out) && !fs::is_empty(out) && !fs::exists(out / "det_02")) {
    throw ConfigError("refusing to replace " + out.string() + ": it exists and is not a dataset directory");
  }
  const fs::path staging = fs::path(out.string() + ".tmp");
  fs::remove_all(staging);
  ingest::save_dataset(staging, seqs);
  fs::remove_all(out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  fs::rename(staging, out);
}

bool is_run_config(const nlohmann::json& j) {
  for (const char* key : {"paths", "model", "training", "mask", "scenario"}) {
    if (j.contains(key)) return true;
  }
  return false;
}

}  // namespace

int cmd_synth(const SynthOptions& o) {
  return guarded([&] {
    ingest::ScenarioConfig scenario;
    if (!o.common.config.empty()) {
      const std::string text = read_text_file(o.common.config);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      if (is_run_config(j)) {
        const auto rc = tracker::run_config_from_json(text);
        if (rc.scenario) scenario = *rc.scenario;
      } else {
        scenario = ingest::scenario_from_json(text);
      }
    }
    if (o.common.seed) scenario.seed = *o.common.seed;
    if (o.noiseless) scenario = scenario.noiseless();
    scenario.validate();
    if (o.common.out.empty()) throw ConfigError("synth needs --out");
    if (o.sequences == 0) throw ConfigError("--sequences must be positive");

    std::vector<ingest::SequenceDataset> seqs;
    for (std::size_t i = 0; i < o.sequences; ++i) {
      ingest::ScenarioConfig c = scenario;
      if (o.sequences > 1) {
        char name[16];
        std::snprintf(name, sizeof name, "%04zu", i);
        c.name = name;
        c.seed = scenario.seed + i;
      }
      seqs.push_back(ingest::generate_synthetic(c));
    }
    publish_dataset(o.common.out, seqs);
    for (const auto& s : seqs) {
      std::cout << "sequence " << s.name << ": " << s.frames.size() << " frames\n";
    }
    log_info("wrote " + std::to_string(seqs.size()) + " sequence(s) to " + o.common.out);
    return kOk;
  });
}

int cmd_train(const TrainOptions& o) {
  return guarded([&] {
    auto config = load_run_config(o.common);
    if (o.time_budget) config.training.time_budget = *o.time_budget;
    const std::string dataset = o.dataset.empty() ? config.paths.dataset : o.dataset;
    const std::string out = o.common.out.empty() ? config.paths.checkpoint : o.common.out;
    if (out.empty()) throw ConfigError("train needs --out or paths.checkpoint");
    const auto seqs = load_sequences(dataset);

    tracker::Model model(config.model, config.training.seed);
    log_info("training on " + std::to_string(seqs.size()) + " sequence(s), " +
             std::to_string(config.training.epochs) + " epochs, lr " + std::to_string(config.training.learning_rate));
    std::ostringstream loss_log;
    loss_log << "step\tL_link\tL_start\tL_end\tL_true\ttotal\n";
    std::cout << "step L_link L_start L_end L_true total\n";
    const auto started = Clock::now();
    const auto result = tracker::train_loop(model, seqs, config.training, [&](const tracker::TrainStep& s) {
      char line[160];
      std::snprintf(line, sizeof line, "%zu %.6f %.6f %.6f %.6f %.6f", s.step, s.loss.link, s.loss.start,
                    s.loss.end, s.loss.truth, s.loss.total);
      std::cout << line << '\n';
      std::string tsv = line;
      for (char& ch : tsv) ch = ch == ' ' ? '\t' : ch;
      loss_log << tsv << '\n';
    });
    model.save(out);
    write_file_atomically(model_sidecar(out), [&](std::ostream& os) { os << tracker::run_config_to_json(config); });
    write_file_atomically(fs::path(out + ".loss.tsv"), [&](std::ostream& os) { os << loss_log.str(); });
    log_info("finished " + std::to_string(result.curve.size()) + " steps (" + std::to_string(result.epochs_completed) +
             " epochs" + (result.stopped_by_budget ? ", stopped by time budget" : "") + ") in " +
             std::to_string(seconds_since(started)) + " s; checkpoint " + out);
    return kOk;
  });
}

int cmd_track(const TrackOptions& o) {
  return guarded([&] {
    auto config = load_run_config(o.common);
    const std::string checkpoint = o.checkpoint.empty() ? config.paths.checkpoint : o.checkpoint;
    const std::string dataset = o.dataset.empty() ? config.paths.dataset : o.dataset;
    const std::string out = o.common.out.empty() ? config.paths.output : o.common.out;
    if (checkpoint.empty()) throw ConfigError("track needs --checkpoint or paths.checkpoint");
    if (!fs::is_regular_file(checkpoint)) throw ConfigError("checkpoint " + checkpoint + " not found");
    if (out.empty()) throw ConfigError("track needs --out or paths.output");
    if (fs::is_regular_file(model_sidecar(checkpoint))) {
      config.model = tracker::run_config_from_json(read_text_file(model_sidecar(checkpoint))).model;
    }
    tracker::Model model(config.model, config.training.seed);
    model.load(checkpoint);
    const auto seqs = load_sequences(dataset);
    log_info("mask schedule '" + config.mask.name + "' (base " + config.mask.base.to_string() + ", " +
             std::to_string(config.mask.intervals.size()) + " interval(s))");

    fs::create_directories(out);
    std::size_t total_windows = 0;
    const auto started = Clock::now();
    for (const auto& seq : seqs) {
      const auto t0 = Clock::now();
      const auto result = tracker::run_sequence(seq, model, config.mask);
      write_file_atomically(fs::path(out) / (seq.name + ".txt"),
                            [&](std::ostream& os) { ingest::write_tracks(result.tracks, os); });
      std::set<int> ids;
      for (const auto& r : result.tracks) ids.insert(r.track_id);
      total_windows += result.windows.size();
      char line[160];
      std::snprintf(line, sizeof line, "sequence %s: %zu windows, %zu tracks, %.1f ms", seq.name.c_str(),
                    result.windows.size(), ids.size(), 1000.0 * seconds_since(t0));
      std::cout << line << '\n';
    }
    char line[120];
    std::snprintf(line, sizeof line, "total: %zu windows in %.3f s", total_windows, seconds_since(started));
    std::cout << line << '\n';
    return kOk;
  });
}

int cmd_eval(const EvalOptions& o) {
  return guarded([&] {
    if (o.results.empty() || o.ground_truth.empty()) throw ConfigError("eval needs --results and --gt");
    if (!fs::is_directory(o.results)) throw ParseError("results directory " + o.results + " does not exist");
    const fs::path label_dir = fs::path(o.ground_truth) / "label_02";
    if (!fs::is_directory(label_dir)) throw ParseError("ground truth " + o.ground_truth + " has no label_02/");
    std::set<std::string> gt_names, result_names;
    for (const auto& e : fs::directory_iterator(label_dir))
      if (e.path().extension() == ".txt") gt_names.insert(e.path().stem().string());
    for (const auto& e : fs::directory_iterator(o.results))
      if (e.path().extension() == ".txt") result_names.insert(e.path().stem().string());
    if (gt_names != result_names) {
      std::string msg = "sequence sets differ:";
      for (const auto& n : gt_names)
        if (!result_names.count(n)) msg += " missing result " + n + ";";
      for (const auto& n : result_names)
        if (!gt_names.count(n)) msg += " no ground truth for " + n + ";";
      throw ParseError(msg);
    }
    std::vector<std::pair<std::string, metrics::MetricReport>> rows;
    metrics::MetricCounts total;
    for (const auto& name : gt_names) {
      std::ifstream g(label_dir / (name + ".txt"));
      std::ifstream r(fs::path(o.results) / (name + ".txt"));
      const auto gt = ingest::parse_labels(g);
      const auto hyp = ingest::parse_labels(r);
      const auto counts = metrics::evaluate_sequence(gt, hyp);
      total += counts;
      rows.emplace_back(name, metrics::make_report(counts));
    }
    const auto overall = metrics::make_report(total);
    rows.emplace_back("all", overall);
    std::cout << metrics::report_table(rows);
    if (!o.out.empty()) {
      write_file_atomically(o.out, [&](std::ostream& os) { os << metrics::report_to_json(overall); });
    }
    return kOk;
  });
}

int cmd_gradcheck(const GradcheckOptions& o) {
  return guarded([&] {
    checks::SuiteOptions so;
    so.seeds = o.seeds;
    so.base_seed = o.seed;
    so.corrupt_backward = o.corrupt_backward;
    so.only = o.only;
    if (so.seeds == 0) throw ConfigError("--seeds must be positive");
    if (o.corrupt_backward) log_info("backward pass deliberately corrupted; every item is expected to fail");
    const auto started = Clock::now();
    const auto results = checks::run_gradcheck_suite(so);
    if (results.empty()) throw ConfigError("no gradcheck item matches the --only filter");
    std::printf("%-26s %6s %6s %8s %12s %8s  %s\n", "item", "seeds", "passed", "redraws", "max_rel_err", "time_s",
                "status");
    bool all = true;
    for (const auto& r : results) {
      std::printf("%-26s %6zu %6zu %8zu %12.3e %8.3f  %s\n", r.name.c_str(), r.seeds_run, r.seeds_passed, r.redraws,
                  r.worst_error, r.seconds, r.passed ? "PASS" : "FAIL");
      all = all && r.passed;
    }
    std::printf("%zu items, tolerance %.0e, %.2f s: %s\n", results.size(), so.tolerance, seconds_since(started),
                all ? "all passed" : "FAILURES");
    return all ? kOk : kCheckFailed;
  });
}

namespace {

struct FuzzOutcome {
  bool agree = false;
  bool feasible = false;
  bool identical = false;
  double gap = 0.0;
};

FuzzOutcome compare_solvers(const assoc::FlowProblem& p) {
  const auto exact = assoc::solve_exact(p);
  const auto brute = assoc::solve_brute_force(p);
  FuzzOutcome r;
  r.gap = std::abs(exact.objective - brute.objective);
  r.agree = r.gap <= 1e-9;
  r.feasible = assoc::is_feasible(p, exact) && assoc::is_feasible(p, brute);
  r.identical = exact.flattened() == brute.flattened();
  return r;
}

}  // namespace

int cmd_lpfuzz(const LpFuzzOptions& o) {
  return guarded([&] {
    if (!o.replay.empty()) {
      const auto p = assoc::problem_from_json(read_text_file(o.replay));
      const auto r = compare_solvers(p);
      std::printf("replay %s: N=%zu M=%zu gap %.3e %s%s\n", o.replay.c_str(), p.n, p.m, r.gap,
                  r.agree ? "agree" : "DISAGREE", r.feasible ? "" : " INFEASIBLE");
      return r.agree && r.feasible ? kOk : kCheckFailed;
    }
    if (o.count == 0) throw ConfigError("--count must be at least 1");
    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<std::size_t> size(0, assoc::kBruteForceLimit);
    std::uniform_real_distribution<double> score(-1.0, 1.0);
    std::size_t agree = 0, feasible = 0, identical = 0;
    double worst = 0.0;
    const auto started = Clock::now();
    for (std::size_t i = 0; i < o.count; ++i) {
      // The first instance is always the empty window.
      const std::size_t n = i == 0 ? 0 : size(rng);
      const std::size_t m = i == 0 ? 0 : size(rng);
      auto p = assoc::FlowProblem::zeros(n, m);
      for (auto* v : {&p.theta_true, &p.theta_link, &p.theta_start, &p.theta_end})
        for (double& x : *v) x = score(rng);
      const auto r = compare_solvers(p);
      agree += r.agree;
      feasible += r.feasible;
      identical += r.identical;
      worst = std::max(worst, r.gap);
      if ((!r.agree || !r.feasible) && !o.out.empty()) {
        char name[40];
        std::snprintf(name, sizeof name, "lpfuzz_%06zu.json", i);
        const fs::path path = fs::path(o.out) / name;
        write_file_atomically(path, [&](std::ostream& os) { os << assoc::problem_to_json(p); });
        log_info("dumped disagreeing instance to " + path.string());
      }
    }
    const bool ok = agree == o.count && feasible == o.count;
    std::printf("instances %zu  agree %zu  feasible %zu  identical %zu  max_gap %.3e  fractional 0 (no LP relaxation)"
                "  time %.3f s  %s\n",
                o.count, agree, feasible, identical, worst, seconds_since(started), ok ? "PASS" : "FAIL");
    return ok ? kOk : kCheckFailed;
  });
}

}  // namespace mmtrack::cli
