#pragma once

#include "advdepth/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advdepth {

/// Everything a command needs: training, data and evaluation settings.
struct RunConfig {
  GanConfig gan;
  SynthDataOptions synth;  // depth range comes from gan.d_min / gan.d_max
  std::string data_dir = "data";
  std::string train_manifest = "train.txt";  // relative to data_dir
  std::string test_manifest = "test.txt";
  DepthFormat depth_format = DepthFormat::pfm;
  std::optional<double> depth_cap;

  /// Synthetic-data options with the shared depth range filled in.
  SynthDataOptions synth_options() const;
};

/// Parses `key = value` lines over the defaults. `#` starts a comment.
/// Unknown keys, malformed values and duplicate keys raise ConfigError
/// naming the line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const fs::path& path);

/// Sets one key from its textual value (used for command-line overrides).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its current value, one `key = value` line each, in a
/// fixed order. parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace advdepth
