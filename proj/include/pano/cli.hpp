#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pano {

/// Raised for schema/usage problems; the CLI maps it to exit code 2.
/// Runtime failures keep std::runtime_error and map to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SynthArgs {
  std::string out;
  int count = 260;
  std::uint64_t seed = 0;
  int class_count = 26;
  double train_fraction = 0.9;
};

struct TrainArgs {
  std::string config_path;  // JSON config (required)
  std::string out;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> profile_override;
  std::string resume;  // checkpoint path, optional
};

struct EvalArgs {
  std::string manifest;
  std::string checkpoint;  // required only for the learned policy
  std::vector<std::string> policies;  // default {"learned"}
  int glimpses = 8;
  int eval_seeds = 5;
  std::uint64_t seed = 0;
  std::string out;
  std::string profile = "";  // inferred from checkpoint when present
  std::string split = "test";
  std::string classification = "off";  // off|from-recon|from-vector|upper-bound
  bool external_baselines = false;
  int threads = 0;  // 0 = auto
};

struct ExploreArgs {
  std::string checkpoint;
  std::string image;
  int glimpses = 5;
  std::uint64_t seed = 0;
  std::string out;
  std::string policy = "learned";
  bool dump_memory = false;
};

struct ReportArgs {
  std::vector<std::string> curves;  // eval curves.csv files
  bool external_baselines = false;
};

int cmd_synth(const SynthArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_explore(const ExploreArgs& args);
int cmd_report(const ReportArgs& args);

}  // namespace pano
