#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "commands.hpp"
#include "log.hpp"

using namespace mmtrack::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& o, bool training_flags) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--out", o.out, "output path");
  if (training_flags) {
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--lr", o.lr, "Adam learning rate");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal online multi-object tracker"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mmtrack 0.1.0");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic multi-sensor dataset");
  add_common(c_synth, synth.common, false);
  c_synth->add_option("--sequences", synth.sequences, "number of sequences (seeds seed, seed+1, ...)");
  c_synth->add_flag("--noiseless", synth.noiseless, "zero every noise source");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "train a model; --out is the checkpoint path");
  add_common(c_train, train.common, true);
  c_train->add_option("--dataset", train.dataset, "dataset directory with label_02/");
  c_train->add_option("--time-budget", train.time_budget, "stop after this many seconds");

  TrackOptions track;
  auto* c_track = app.add_subcommand("track", "track every sequence of a dataset");
  add_common(c_track, track.common, false);
  c_track->add_option("--mask", track.common.mask, "mask preset (all, lose-image, lose-cloud, ...) or JSON file");
  c_track->add_option("--dataset", track.dataset, "dataset directory");
  c_track->add_option("--checkpoint", track.checkpoint, "trained checkpoint");

  EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "CLEAR-MOT and MT/ML evaluation");
  c_eval->add_option("--results", eval.results, "directory of <seq>.txt tracking results")->required();
  c_eval->add_option("--gt", eval.ground_truth, "dataset directory with label_02/")->required();
  c_eval->add_option("--out", eval.out, "also write the overall report as JSON");

  GradcheckOptions grad;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable component");
  c_grad->add_option("--seeds", grad.seeds, "seeds per item");
  c_grad->add_option("--seed", grad.seed, "base seed");
  c_grad->add_option("--only", grad.only, "item name prefixes");
  c_grad->add_flag("--corrupt-backward", grad.corrupt_backward, "debug: perturb analytic gradients (must fail)");

  LpFuzzOptions fuzz;
  auto* c_fuzz = app.add_subcommand("lp-fuzz", "compare the exact solver with brute force on random windows");
  c_fuzz->add_option("--count", fuzz.count, "number of random instances");
  c_fuzz->add_option("--seed", fuzz.seed, "RNG seed");
  c_fuzz->add_option("--out", fuzz.out, "directory for disagreeing instance dumps");
  c_fuzz->add_option("--replay", fuzz.replay, "re-run one dumped instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth);
    if (c_train->parsed()) return cmd_train(train);
    if (c_track->parsed()) return cmd_track(track);
    if (c_eval->parsed()) return cmd_eval(eval);
    if (c_grad->parsed()) return cmd_gradcheck(grad);
    if (c_fuzz->parsed()) return cmd_lpfuzz(fuzz);
  } catch (const std::exception& e) {
    log_error(e.what());
    return kDataFailure;
  }
  return kConfigFailure;
}
