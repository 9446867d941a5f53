// advdepth: synthetic data, training, evaluation, prediction and gradient
// checks for adversarial monocular depth models.

#include "advdepth/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace advdepth;

namespace {

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::vector<std::string> overrides;  // key=value
};

RunConfig resolve(const Global& g, const std::optional<fs::path>& fallback = std::nullopt) {
  RunConfig cfg;
  if (!g.config.empty())
    cfg = load_config(g.config);
  else if (fallback)
    cfg = load_config(*fallback);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.gan.seed = *g.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial monocular depth estimation toolkit"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides the config seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto* synth = app.add_subcommand("synth-data", "Write seeded synthetic scenes and train/test manifests");
  std::optional<int> synth_count;
  synth->add_option("--count", synth_count, "Number of scenes");

  auto* train = app.add_subcommand("train", "Train a generator (and discriminator)");
  std::string generator;
  bool no_adv = false;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::string resume, data_dir;
  bool quiet = false;
  train->add_option("--generator", generator, "unet or cnn_crf")->check(CLI::IsMember({"unet", "cnn_crf"}));
  train->add_flag("--no-adversarial", no_adv, "L1-only ablation");
  train->add_option("--lambda", lambda, "L1 weight");
  train->add_option("--epochs", epochs, "Total epochs (constant/decay split kept)");
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--data", data_dir, "Dataset directory holding the manifests");
  train->add_flag("--quiet", quiet, "No per-epoch progress lines");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  EvalArgs eval_args;
  std::string eval_manifest;
  std::optional<double> depth_cap;
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest, "Manifest (default: config test manifest)");
  eval->add_option("--depth-cap", depth_cap, "Ignore ground-truth pixels deeper than this (meters)");

  auto* predict = app.add_subcommand("predict", "Predict depth for one RGB image");
  PredictArgs pred_args;
  std::string colormap;
  predict->add_option("--checkpoint", pred_args.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--input", pred_args.input, "RGB PNG")->required();
  predict->add_option("--output", pred_args.output, "Depth PFM to write")->required();
  predict->add_option("--colormap", colormap, "Optional colorized PNG to write");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference and oracle verification suites");
  std::string scope = "all";
  GradCheckOptions gopts;
  bool list = false;
  grad->add_option("--scope", scope, "primitives, unet, crf or all")
      ->check(CLI::IsMember({"primitives", "unet", "crf", "all"}))
      ->capture_default_str();
  grad->add_option("--seeds", gopts.seeds, "Seeds per check")->capture_default_str();
  grad->add_option("--inject-fault", gopts.inject_fault, "Perturb the analytic gradient of the named check");
  grad->add_flag("--list", list, "List check names and exit");

  CLI11_PARSE(app, argc, argv);

  return guarded(std::cerr, [&]() -> int {
    const fs::path out = g.out;
    if (synth->parsed()) {
      RunConfig cfg = resolve(g);
      if (synth_count) cfg.synth.count = *synth_count;
      return cmd_synth_data(cfg, out, std::cout);
    }
    if (train->parsed()) {
      RunConfig cfg = resolve(g);
      if (!generator.empty()) set_config_value(cfg, "generator", generator);
      if (no_adv) cfg.gan.adversarial = false;
      if (lambda) cfg.gan.lambda = *lambda;
      if (epochs) set_total_epochs(cfg.gan, *epochs);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      TrainArgs args;
      if (!resume.empty()) args.resume = fs::path(resume);
      args.quiet = quiet;
      return cmd_train(cfg, out, args, std::cout);
    }
    if (eval->parsed()) {
      RunConfig cfg = resolve(g, find_run_config(eval_args.checkpoint));
      if (depth_cap) cfg.depth_cap = *depth_cap;
      if (!eval_manifest.empty()) eval_args.manifest = fs::path(eval_manifest);
      return cmd_eval(cfg, out, eval_args, std::cout);
    }
    if (predict->parsed()) {
      RunConfig cfg = resolve(g, find_run_config(pred_args.checkpoint));
      if (!colormap.empty()) pred_args.colormap = fs::path(colormap);
      return cmd_predict(cfg, pred_args, std::cout);
    }
    const GradScope sc = scope == "primitives" ? GradScope::primitives
                         : scope == "unet"     ? GradScope::unet
                         : scope == "crf"      ? GradScope::crf
                                               : GradScope::all;
    if (list) {
      for (const auto& n : gradcheck_names(sc)) std::cout << n << '\n';
      return kExitOk;
    }
    if (g.seed) gopts.base_seed = *g.seed;
    return cmd_gradcheck(sc, gopts, out, std::cout);
  });
}
