#include "advdepth/commands.hpp"

#include "advdepth/image.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace advdepth {

int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const NanAbort& e) {
    err << "error: " << e.what() << '\n';
    return kExitNan;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigMismatch& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / "config.txt");
  if (!out) throw IoError("cannot write " + (dir / "config.txt").string());
  out << serialize_config(cfg);
}

int cmd_synth_data(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const SynthDataOptions opts = cfg.synth_options();
  echo_config(cfg, out);
  const SplitManifests m = write_synth_dataset(out, opts, cfg.gan.seed);
  // Self-validation: every emitted pair must load back as a valid sample.
  for (const auto* list : {&m.train, &m.test})
    for (const auto& e : *list) {
      DepthSample s = load_pair(out / e.rgb, out / e.depth, DepthFormat::pfm);
      s.d_min = opts.d_min;
      s.d_max = opts.d_max;
      validate_sample(s);
      if (s.depth.array().minCoeff() < opts.d_min || s.depth.array().maxCoeff() > opts.d_max)
        throw InvalidArgument(e.depth + ": depth outside the configured range");
    }
  log << "wrote " << opts.count << " scenes (" << m.train.size() << " train / " << m.test.size() << " test) to "
      << out.string() << '\n';
  return kExitOk;
}

void set_total_epochs(GanConfig& cfg, int n) {
  if (n < 1) throw ConfigError("--epochs must be >= 1");
  const int total = cfg.total_epochs();
  const double frac = total > 0 ? static_cast<double>(cfg.epochs_constant) / total : 0.5;
  cfg.epochs_constant = static_cast<int>(std::ceil(frac * n));
  cfg.epochs_decay = n - cfg.epochs_constant;
}

namespace {

fs::path manifest_path(const RunConfig& cfg, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(cfg.data_dir) / p;
}

std::vector<DepthSample> load_split(const RunConfig& cfg, const fs::path& manifest) {
  std::vector<DepthSample> s = load_manifest_samples(manifest, cfg.depth_format);
  for (auto& x : s) {
    x.d_min = cfg.gan.d_min;
    x.d_max = cfg.gan.d_max;
  }
  return s;
}

}  // namespace

int cmd_train(const RunConfig& cfg, const fs::path& out, const TrainArgs& args, std::ostream& log) {
  cfg.gan.validate();
  const auto train = load_split(cfg, manifest_path(cfg, cfg.train_manifest));
  const auto test = load_split(cfg, manifest_path(cfg, cfg.test_manifest));
  echo_config(cfg, out);
  TrainState state(cfg.gan);
  if (args.resume) checkpoint_load(state, *args.resume);
  LoopOptions opts;
  opts.run_dir = out;
  std::ofstream steps;
  if (state.crf) {
    // Per-step record of the CRF objective and the pairwise weights.
    steps.open(out / "crf_steps.csv", args.resume ? std::ios::app : std::ios::trunc);
    if (!args.resume) {
      steps << "step,nll";
      for (int k = 0; k < kSimilarityKinds; ++k) steps << ",beta" << (k + 1);
      steps << '\n';
    }
    opts.on_step = [&steps](const TrainState& s, const StepResult& r) {
      steps << s.step << ',' << format_double(r.crf_nll.value_or(NAN));
      for (Index k = 0; k < kSimilarityKinds; ++k) steps << ',' << format_double(s.crf->beta().value[k]);
      steps << '\n';
    };
  }
  if (!args.quiet)
    opts.on_epoch = [&log, &cfg](const TrainState&, const EpochRecord& r) {
      log << "epoch " << r.epoch + 1 << '/' << cfg.gan.total_epochs() << "  d_loss="
          << (r.d_loss ? format_double(*r.d_loss) : std::string("-")) << "  g_l1=" << format_double(r.g_l1)
          << "  rel=" << format_double(r.metrics.rel);
      if (r.crf_nll) log << "  nll=" << format_double(*r.crf_nll);
      log << std::endl;
    };
  train_loop(state, train, test, opts);
  log << "finished " << state.epoch << " epochs; checkpoint " << (out / "checkpoints" / "latest.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out, const EvalArgs& args, std::ostream& log) {
  TrainState state(cfg.gan);
  checkpoint_load(state, args.checkpoint);
  const fs::path manifest = args.manifest.value_or(manifest_path(cfg, cfg.test_manifest));
  const auto entries = read_manifest(manifest);
  const auto samples = load_split(cfg, manifest);
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream per(out / "eval_per_sample.csv");
  if (!per) throw IoError("cannot write " + (out / "eval_per_sample.csv").string());
  per << "index,rgb," << kReportCsvHeader << '\n';
  MetricsAccumulator total;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::vector<DepthSample> one{samples[i]};
    const MetricsReport r = evaluate(state, one, cfg.depth_cap);
    per << i << ',' << entries[i].rgb << ',' << serialize_report(r, ReportFormat::csv_row) << '\n';
  }
  const MetricsReport agg = evaluate(state, samples, cfg.depth_cap);
  std::ofstream(out / "eval_aggregate.csv") << kReportCsvHeader << '\n' << serialize_report(agg, ReportFormat::csv_row) << '\n';
  log << serialize_report(agg, ReportFormat::human_table);
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const PredictArgs& args, std::ostream& log) {
  TrainState state(cfg.gan);
  checkpoint_load(state, args.checkpoint);
  if (!fs::exists(args.input)) throw IoError("cannot read input image " + args.input.string());
  const Tensorf rgb = read_png_rgb(args.input);
  const Index size = cfg.gan.unet.input_size;
  Tensorf x = rgb.dim(1) == size && rgb.dim(2) == size ? rgb : resize_bilinear(rgb, size, size);
  x.array() = x.array() * 2.0f - 1.0f;
  Tensorf pred = batch_item(state.predict(stack(std::vector<Tensorf>{x})), 0);
  Tensorf depth = denormalize_depth(pred, cfg.gan.d_min, cfg.gan.d_max);
  if (depth.dim(1) != rgb.dim(1) || depth.dim(2) != rgb.dim(2)) depth = resize_bilinear(depth, rgb.dim(1), rgb.dim(2));
  write_pfm(args.output, depth);
  if (args.colormap) write_png_rgb(*args.colormap, colorize_depth(depth, cfg.gan.d_min, cfg.gan.d_max));
  log << "wrote " << args.output.string() << " (" << depth.dim(2) << "x" << depth.dim(1) << ", "
      << format_double(depth.array().minCoeff()) << ".." << format_double(depth.array().maxCoeff()) << " m)\n";
  return kExitOk;
}

int cmd_gradcheck(GradScope scope, const GradCheckOptions& opts, const fs::path& out, std::ostream& log) {
  const auto results = run_gradcheck(scope, opts);
  const std::string report = format_gradcheck(results);
  log << report;
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream(out / "gradcheck.txt") << report;
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  log << (ok ? "all checks passed" : "gradient check FAILED") << '\n';
  return ok ? kExitOk : kExitVerification;
}

std::optional<fs::path> find_run_config(const fs::path& checkpoint) {
  fs::path dir = fs::absolute(checkpoint).parent_path();
  for (int i = 0; i < 3 && !dir.empty(); ++i, dir = dir.parent_path())
    if (fs::exists(dir / "config.txt")) return dir / "config.txt";
  return std::nullopt;
}

}  // namespace advdepth
