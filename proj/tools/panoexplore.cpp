#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "pano/cli.hpp"

// Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
int main(int argc, char** argv) {
  CLI::App app{"active panorama exploration: train, evaluate and inspect glimpse agents"};
  app.require_subcommand(1);

  pano::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic panorama corpus");
  synth_cmd->add_option("--out", synth.out, "output corpus directory")->required();
  synth_cmd->add_option("--count", synth.count, "number of panoramas");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--classes", synth.class_count, "number of scene classes");
  synth_cmd->add_option("--train-fraction", synth.train_fraction, "fraction assigned to the train split");

  pano::TrainArgs train;
  std::uint64_t train_seed = 0;
  std::string train_profile;
  auto* train_cmd = app.add_subcommand("train", "train the exploration model");
  train_cmd->add_option("--config", train.config_path, "JSON training config")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "override config seed");
  auto* profile_opt = train_cmd->add_option("--profile", train_profile, "override config profile (full|small|micro)");
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");

  pano::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate policies on a dataset split");
  eval_cmd->add_option("--manifest", eval.manifest, "dataset manifest (jsonl)")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint (required for learned policy)");
  eval_cmd->add_option("--policy", eval.policies,
                       "policy to evaluate (repeatable): learned|random|middle-random|neighborhood|gt-oracle");
  eval_cmd->add_option("--glimpses", eval.glimpses, "glimpses per episode (T)");
  eval_cmd->add_option("--eval-seeds", eval.eval_seeds, "number of evaluation seeds");
  eval_cmd->add_option("--seed", eval.seed, "base seed");
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_option("--profile", eval.profile, "profile when no checkpoint is given");
  eval_cmd->add_option("--split", eval.split, "dataset split (train|test)");
  eval_cmd->add_option("--classification", eval.classification,
                       "report accuracy for the learned policy: off|from-recon|from-vector|upper-bound");
  eval_cmd->add_flag("--external-baselines", eval.external_baselines, "append cited external baseline rows");
  eval_cmd->add_option("--threads", eval.threads, "worker threads (0 = auto)");

  pano::ExploreArgs explore;
  auto* explore_cmd = app.add_subcommand("explore", "dump a step-by-step exploration trace");
  explore_cmd->add_option("--checkpoint", explore.checkpoint, "model checkpoint")->required();
  explore_cmd->add_option("--image", explore.image, "input panorama (png/jpeg)")->required();
  explore_cmd->add_option("--glimpses", explore.glimpses, "steps to run");
  explore_cmd->add_option("--seed", explore.seed, "episode seed");
  explore_cmd->add_option("--out", explore.out, "output directory")->required();
  explore_cmd->add_option("--policy", explore.policy, "policy driving the exploration");
  explore_cmd->add_flag("--dump-memory", explore.dump_memory, "also write raw memory snapshots");

  pano::ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "render a summary table from eval curves");
  report_cmd->add_option("--curves", report.curves, "curves.csv produced by eval (repeatable)")->required();
  report_cmd->add_flag("--external-baselines", report.external_baselines, "append cited external baseline rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) return pano::cmd_synth(synth);
    if (*train_cmd) {
      if (seed_opt->count()) train.seed_override = train_seed;
      if (profile_opt->count()) train.profile_override = train_profile;
      return pano::cmd_train(train);
    }
    if (*eval_cmd) return pano::cmd_eval(eval);
    if (*explore_cmd) return pano::cmd_explore(explore);
    if (*report_cmd) return pano::cmd_report(report);
  } catch (const pano::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
