#pragma once

#include "advdepth/config.hpp"
#include "advdepth/gradcheck.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace advdepth {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitNan = 4, kExitVerification = 5 };

/// Runs `fn`, mapping exceptions to exit codes and printing them to `err`.
int guarded(std::ostream& err, const std::function<int()>& fn);

/// Writes the effective config into `dir/config.txt`.
void echo_config(const RunConfig& cfg, const fs::path& dir);

/// Synthetic scenes and manifests into `out`.
int cmd_synth_data(const RunConfig& cfg, const fs::path& out, std::ostream& log);

struct TrainArgs {
  std::optional<fs::path> resume;  // checkpoint to continue from
  bool quiet = false;
};
/// Trains on cfg.data_dir manifests; logs, checkpoints and config go to `out`.
int cmd_train(const RunConfig& cfg, const fs::path& out, const TrainArgs& args, std::ostream& log);

/// Total epochs `n` split between constant and decay phases in the config's
/// proportion (constant phase rounded up).
void set_total_epochs(GanConfig& cfg, int n);

struct EvalArgs {
  fs::path checkpoint;
  std::optional<fs::path> manifest;  // defaults to the config's test manifest
};
int cmd_eval(const RunConfig& cfg, const fs::path& out, const EvalArgs& args, std::ostream& log);

struct PredictArgs {
  fs::path checkpoint;
  fs::path input;
  fs::path output;                  // PFM
  std::optional<fs::path> colormap;  // 8-bit PNG
};
int cmd_predict(const RunConfig& cfg, const PredictArgs& args, std::ostream& log);

int cmd_gradcheck(GradScope scope, const GradCheckOptions& opts, const fs::path& out, std::ostream& log);

/// Config of the run that wrote a checkpoint: config.txt beside it or in its
/// parent directories (up to two levels).
std::optional<fs::path> find_run_config(const fs::path& checkpoint);

}  // namespace advdepth
