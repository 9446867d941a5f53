// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any
// criterion fails. Progress notes go to stderr.

#include "advdepth/commands.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <numbers>
#include <iostream>
#include <set>
#include <sstream>

using namespace advdepth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;     // summary numbers
  std::vector<std::string> failures;  // what went wrong

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd matrix_view(const Tensord& t) {
  const Index rows = t.dim(0), cols = t.size() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = t[i * cols + j];
  return m;
}

Tensord tensor_view(const Eigen::MatrixXd& m, const Shape& shape) {
  Tensord t(shape);
  const Index cols = m.cols();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < cols; ++j) t[i * cols + j] = m(i, j);
  return t;
}

// 1. Finite-difference gradient suite -----------------------------------------

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  opts.seeds = 20;
  const auto results = run_gradcheck(GradScope::all, opts);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::set<std::string> names;
  for (const auto& r : results) {
    names.insert(r.name);
    worst = std::max(worst, r.name == "crf.map_vs_ascent" ? 0.0 : r.max_error);
    o.require(r.passed, r.name + " max_err " + fmt(r.max_error));
    o.require(r.seeds >= 20, r.name + " ran " + std::to_string(r.seeds) + " seeds");
  }
  for (const char* need : {"conv2d", "conv_transpose2d", "leaky_relu", "relu", "tanh", "sigmoid", "concat_channels",
                           "dropout", "spectral_normalize", "unet", "discriminator", "crf.nll_dh", "crf.nll_dbeta",
                           "crf.unary_cnn"}) {
    bool found = false;
    for (const auto& n : names) found = found || n == need || n.rfind(std::string(need) + ".", 0) == 0 ||
                                        n.rfind(std::string(need) + "_", 0) == 0 || n.rfind(std::string(need) + "[", 0) == 0;
    o.require(found, std::string("no check covers ") + need);
  }
  o.require(secs < 300, "runtime " + fmt(secs) + " s exceeds 5 min");
  o.note(std::to_string(results.size()) + " checks x 20 seeds, worst rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) +
         " s");
  return o;
}

// 2. CRF oracles --------------------------------------------------------------

Outcome criterion_crf() {
  Outcome o;
  Rng rng(2024);
  double worst_solve = 0, worst_ascent = 0;
  for (int t = 0; t < 100; ++t) {
    const SuperpixelGraph g = random_crf_graph(rng, 1 + t % 6, 8, 8);
    const Eigen::VectorXd y = crf_map(g);
    const Eigen::VectorXd direct = oracle::precision(g, g.beta).inverse() * g.h;
    worst_solve = std::max(worst_solve, (y - direct).cwiseAbs().maxCoeff());
    worst_ascent = std::max(worst_ascent, (y - crf_map_ascent(g)).cwiseAbs().maxCoeff());
  }
  o.require(worst_solve < 1e-6, "MAP vs A^-1 h off by " + fmt(worst_solve));
  o.require(worst_ascent < 1e-6, "MAP vs gradient ascent off by " + fmt(worst_ascent));

  SuperpixelGraph pair = graph_from_labels({0, 1}, 1, 2);
  pair.similarity = {{1.0, 0.0}};
  pair.beta = Eigen::Vector2d(1.0, 0.0);
  pair.h = Eigen::Vector2d(0.0, 1.0);
  const Eigen::VectorXd yp = crf_map(pair);
  const double pair_err = std::max(std::fabs(yp[0] - 1.0 / 3), std::fabs(yp[1] - 2.0 / 3));
  o.require(pair_err <= 1e-12, "two-node case off by " + fmt(pair_err));

  SuperpixelGraph one = graph_from_labels({0, 0, 0, 0}, 2, 2);
  one.h = Eigen::VectorXd::Constant(1, -0.42);
  one.beta = Eigen::Vector2d(0.7, 1.3);
  const double nll_err = std::fabs(crf_nll(one, one.h) - 0.5 * std::log(std::numbers::pi));
  o.require(nll_err <= 1e-12, "g=1 NLL off by " + fmt(nll_err));

  long violations = 0, samples = 0;
  for (int t = 0; t < 100; ++t) {
    const SuperpixelGraph g = random_crf_graph(rng, 1 + t % 8, 8, 8);
    const Eigen::VectorXd ys = crf_map(g);
    const double best = crf_nll(g, ys);
    for (int s = 0; s < 100; ++s, ++samples) {
      const double scale = std::pow(10.0, -3.0 + 3.0 * uniform01(rng));
      Eigen::VectorXd y = ys;
      for (Index i = 0; i < y.size(); ++i) y[i] += scale * (2 * uniform01(rng) - 1);
      violations += crf_nll(g, y) < best;
    }
  }
  o.require(violations == 0, std::to_string(violations) + " sampled y beat the MAP likelihood");
  o.note("100 graphs: |MAP - A^-1h| " + fmt(worst_solve, 2) + ", |MAP - ascent| " + fmt(worst_ascent, 2) +
         "; pair err " + fmt(pair_err, 2) + "; g=1 NLL err " + fmt(nll_err, 2) + "; " + std::to_string(samples) +
         " samples, 0 below MAP" + (violations ? " (violated)" : ""));
  return o;
}

// 3. Spectral normalization -----------------------------------------------------

Outcome criterion_spectral() {
  Outcome o;
  Rng rng(33);
  double lo = 1e9, hi = 0;
  for (int t = 0; t < 100; ++t) {
    const Index a = 1 + static_cast<Index>(uniform_index(rng, 64)), b = 1 + static_cast<Index>(uniform_index(rng, 64));
    const int k = std::array<int, 3>{1, 3, 4}[uniform_index(rng, 3)];
    const bool transposed = uniform01(rng) < 0.5;
    ConvLayer<double> layer("w", a, b, k, 2, 1, transposed, true, rng);
    // Construction runs 15 cold-start iterations; 35 training updates follow.
    for (int i = 0; i < 35; ++i) layer.advance_spectral();
    const double s = oracle::sigma_max(matrix_view(layer.effective_weight()));
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  o.require(lo >= 0.95 && hi <= 1.05, "normalized sigma range [" + fmt(lo) + ", " + fmt(hi) + "]");

  // Convergence on matrices with a top singular gap of at least 10%.
  std::normal_distribution<double> normal;
  int accepted = 0, worst_iters = 0;
  double worst_err = 0;
  while (accepted < 100) {
    const Index m = 2 + static_cast<Index>(uniform_index(rng, 40)), n = 2 + static_cast<Index>(uniform_index(rng, 40));
    Eigen::MatrixXd w(m, n);
    if (accepted % 2 == 0) {
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    } else {
      // Prescribed spectrum: sigma_2 = 0.9 sigma_1 exactly.
      Eigen::MatrixXd ga(m, m), gb(n, n);
      for (Index i = 0; i < ga.size(); ++i) ga.data()[i] = normal(rng);
      for (Index i = 0; i < gb.size(); ++i) gb.data()[i] = normal(rng);
      const Eigen::MatrixXd U = Eigen::HouseholderQR<Eigen::MatrixXd>(ga).householderQ();
      const Eigen::MatrixXd V = Eigen::HouseholderQR<Eigen::MatrixXd>(gb).householderQ();
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, n);
      for (Index i = 0; i < std::min(m, n); ++i) S(i, i) = i == 0 ? 1.0 : 0.9 * std::pow(0.95, static_cast<double>(i - 1));
      w = U * S * V.transpose();
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues();
    if (sv.size() > 1 && sv[1] > 0.9 * sv[0] + 1e-12) continue;
    ++accepted;
    const Tensord wt = tensor_view(w, {m, n});
    SpectralState<double> st;
    int iters = 0;
    double err = 1;
    while (iters < 50 && err >= 1e-3) {
      power_iterate(wt, st, 1);
      ++iters;
      err = std::fabs(sigma_from_state(wt, st) - sv[0]) / sv[0];
    }
    worst_iters = std::max(worst_iters, iters);
    worst_err = std::max(worst_err, err);
  }
  o.require(worst_err < 1e-3, "power iteration stalled at rel err " + fmt(worst_err));

  double scale_err = 0;
  for (int t = 0; t < 100; ++t) {
    const Tensord w = oracle::random_tensor({1 + static_cast<Index>(uniform_index(rng, 32)),
                                             1 + static_cast<Index>(uniform_index(rng, 32)), 3, 3},
                                            rng);
    for (double c : {0.1, 10.0}) {
      SpectralState<double> s1, s2;
      s1.iterations_per_update = s2.iterations_per_update = 50;
      const Tensord a = apply_spectral_norm(w, s1);
      const Tensord b = apply_spectral_norm(Tensord(w.shape(), w.array() * c), s2);
      scale_err = std::max(scale_err, (a.array() - b.array()).abs().maxCoeff());
    }
  }
  o.require(scale_err <= 1e-4, "scale invariance off by " + fmt(scale_err));
  o.note("100 conv weights sigma in [" + fmt(lo, 5) + ", " + fmt(hi, 5) + "]; 100 gapped matrices within 1e-3 by " +
         std::to_string(worst_iters) + " iterations; scale err " + fmt(scale_err, 2));
  return o;
}

// 4. Patch discriminator --------------------------------------------------------

Outcome criterion_discriminator() {
  Outcome o;
  const int rf = receptive_field(PatchDiscriminatorSpec::default_layers(64));
  o.require(rf == 70, "receptive field " + std::to_string(rf));

  Rng rng(44);
  {
    PatchDiscriminator<float> d(PatchDiscriminatorSpec{}, rng);
    Graph<float> g;
    Tensorf rgb({1, 3, 256, 256}), depth({1, 1, 256, 256});
    for (Index i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<float>(2 * uniform01(rng) - 1);
    for (Index i = 0; i < depth.size(); ++i) depth[i] = static_cast<float>(2 * uniform01(rng) - 1);
    const Tensorf s = d.forward(g.constant(rgb), g.constant(depth)).value();
    o.require(s.shape() == Shape{1, 1, 30, 30}, "256x256 score map " + shape_str(s.shape()));
    o.require(s.array().minCoeff() > 0 && s.array().maxCoeff() < 1, "scores outside (0,1)");
  }

  // Exhaustive single-pixel perturbation at 64x64. Hand-derived coverage:
  // cell i sees input rows/cols [8 i - 23, 8 i + 47).
  PatchDiscriminatorSpec spec;
  spec.layers = PatchDiscriminatorSpec::default_layers(8);
  PatchDiscriminator<double> d(spec, rng);
  const Tensord pair = oracle::random_tensor({1, 4, 64, 64}, rng);
  Tensord base;
  {
    Graph<double> g;
    base = d.forward_pair(g.constant(pair)).value();
  }
  o.require(base.shape() == Shape{1, 1, 6, 6}, "64x64 score map " + shape_str(base.shape()));
  auto covers = [](Index cell, Index p) { return p >= 8 * cell - 23 && p < 8 * cell + 47; };
  long outside = 0, inside_changed = 0, inside_total = 0;
  for (Index y = 0; y < 64; ++y)
    for (Index x = 0; x < 64; ++x) {
      Tensord p = pair;
      for (Index c = 0; c < 4; ++c) p[(c * 64 + y) * 64 + x] += 0.5;
      Graph<double> g;
      const Tensord s = d.forward_pair(g.constant(p)).value();
      for (Index cy = 0; cy < 6; ++cy)
        for (Index cx = 0; cx < 6; ++cx) {
          const bool changed = s[cy * 6 + cx] != base[cy * 6 + cx];
          const bool in = covers(cy, y) && covers(cx, x);
          outside += changed && !in;
          inside_total += in;
          inside_changed += changed && in;
        }
    }
  o.require(outside == 0, std::to_string(outside) + " cells changed outside their receptive field");
  o.note("rf 70; 256 -> 30x30; 4096 perturbations: 0 changes outside, " + std::to_string(inside_changed) + "/" +
         std::to_string(inside_total) + " covering cells responded");
  return o;
}

// 5. Metrics --------------------------------------------------------------------

Outcome criterion_metrics() {
  Outcome o;
  Rng rng(55);
  double worst = 0;
  bool monotone = true, scale_ok = true;
  for (int t = 0; t < 100; ++t) {
    const Index n = 16 + static_cast<Index>(uniform_index(rng, 500));
    Tensord gt({n}), est({n});
    std::vector<bool> mask(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      gt[i] = 0.5 + 9.5 * uniform01(rng);
      est[i] = uniform01(rng) < 0.02 ? -uniform01(rng) : gt[i] * std::exp(0.6 * (uniform01(rng) - 0.5));
      mask[static_cast<std::size_t>(i)] = uniform01(rng) < 0.9 || i == 0;
    }
    const std::vector<double> g(gt.data(), gt.data() + n), e(est.data(), est.data() + n);
    const MetricsReport a = compute_metrics(est, gt, &mask);
    const MetricsReport b = oracle::metrics(e, g, &mask);
    for (double diff : {a.rel - b.rel, a.sq_rel - b.sq_rel, a.log10 - b.log10, a.rms - b.rms, a.rms_log - b.rms_log,
                        a.delta1 - b.delta1, a.delta2 - b.delta2, a.delta3 - b.delta3})
      worst = std::max(worst, std::fabs(diff));
    o.require(a.n_pixels == b.n_pixels, "pixel count mismatch");
    monotone = monotone && a.delta1 <= a.delta2 && a.delta2 <= a.delta3;

    const double c = 0.1 + 5 * uniform01(rng);
    Tensord gpos = gt, epos = est;
    epos.array() = epos.array().abs() + 0.1;
    const MetricsReport u = compute_metrics(epos, gpos);
    const MetricsReport v =
        compute_metrics(Tensord(epos.shape(), epos.array() * c), Tensord(gpos.shape(), gpos.array() * c));
    scale_ok = scale_ok && std::fabs(u.rel - v.rel) < 1e-12 && std::fabs(u.log10 - v.log10) < 1e-12 &&
               std::fabs(u.rms_log - v.rms_log) < 1e-12 && u.delta1 == v.delta1 && u.delta2 == v.delta2 &&
               u.delta3 == v.delta3 && std::fabs(v.rms - c * u.rms) < 1e-9 * c &&
               std::fabs(v.sq_rel - c * u.sq_rel) < 1e-9 * c;
  }
  o.require(worst < 1e-9, "oracle mismatch " + fmt(worst));
  o.require(monotone, "delta thresholds not monotone");
  o.require(scale_ok, "scale behaviour violated");
  const MetricsReport h = compute_metrics(Tensord::from({2}, {2, 5}), Tensord::from({2}, {2, 4}));
  o.require(std::fabs(h.rel - 0.125) < 1e-15 && std::fabs(h.rms - std::sqrt(0.5)) < 1e-12 && h.delta1 == 0.5,
            "hand case rel " + fmt(h.rel) + " rms " + fmt(h.rms) + " d1 " + fmt(h.delta1));
  o.note("100 instances max |diff| " + fmt(worst, 2) + "; hand case rel " + fmt(h.rel) + " rms " + fmt(h.rms, 5) +
         " d1 " + fmt(h.delta1));
  return o;
}

// 6. Stabilizers and resume -------------------------------------------------------

GanConfig resume_config() {
  GanConfig c;
  c.unet.input_size = 32;
  c.unet.base_channels = 4;
  c.unet.max_channels = 32;
  c.disc_base_channels = 4;
  c.epochs_constant = 2;
  c.epochs_decay = 2;
  c.checkpoint_every = 2;
  c.buffer_capacity = 8;
  c.seed = 66;
  return c;
}

Outcome criterion_stabilizers(const fs::path& work) {
  Outcome o;
  bool ttur = true;
  for (const GanConfig& c : {GanConfig{}, resume_config()})
    for (int e = 0; e < c.total_epochs(); ++e) {
      const auto [g, d] = lr_at_epoch(c, e);
      ttur = ttur && d == 4.0 * g;
    }
  o.require(ttur, "d_lr / g_lr != 4 at some epoch");
  const auto lr = lr_at_epoch(GanConfig{}, 225);
  o.require(std::fabs(lr.first - 1e-4) < 1e-15 && std::fabs(lr.second - 4e-4) < 1e-15,
            "lr(225) = (" + fmt(lr.first) + ", " + fmt(lr.second) + ")");

  Rng rng(6);
  ReplayBuffer buf(50);
  std::size_t max_size = 0;
  int stored = 0;
  for (int i = 0; i < 60; ++i) {
    buf.exchange({Tensorf::constant({1}, static_cast<float>(i)), Tensorf::constant({1}, 0.f)}, rng);
    max_size = std::max(max_size, buf.size());
  }
  for (int i = 0; i < 10000; ++i) {
    const float v = static_cast<float>(100 + i);
    stored += buf.exchange({Tensorf::constant({1}, v), Tensorf::constant({1}, 0.f)}, rng).first[0] != v;
    max_size = std::max(max_size, buf.size());
  }
  const double frac = stored / 10000.0;
  o.require(max_size == 50, "buffer reached " + std::to_string(max_size));
  o.require(std::fabs(frac - 0.5) <= 0.03, "stored fraction " + fmt(frac));

  std::vector<DepthSample> train, test;
  for (std::uint64_t i = 0; i < 12; ++i) train.push_back(synth_scene(600 + i, 32, 3).sample);
  for (std::uint64_t i = 0; i < 4; ++i) test.push_back(synth_scene(700 + i, 32, 3).sample);

  const fs::path full = work / "resume_full", part = work / "resume_part", cont = work / "resume_cont",
                 from_mid = work / "resume_mid";
  for (const auto& d : {full, part, cont, from_mid}) fs::remove_all(d);
  TrainState a(resume_config());
  train_loop(a, train, test, {full, std::nullopt, {}, {}});

  TrainState b(resume_config());
  train_loop(b, train, test, {part, 2, {}, {}});
  TrainState c(resume_config());
  checkpoint_load(c, part / "checkpoints" / "latest.ckpt");
  train_loop(c, train, test, {cont, std::nullopt, {}, {}});

  TrainState m(resume_config());
  checkpoint_load(m, full / "checkpoints" / "epoch_0002.ckpt");
  train_loop(m, train, test, {from_mid, std::nullopt, {}, {}});

  o.require(a.history.size() == 4, "uninterrupted run logged " + std::to_string(a.history.size()) + " epochs");
  o.require(c.history == a.history, "interrupted+resumed history differs");
  o.require(m.history == a.history, "history resumed from the cadence checkpoint differs");
  o.require(oracle::slurp(cont / "loss_log.csv") == oracle::slurp(full / "loss_log.csv"), "loss CSV differs");
  o.require(oracle::slurp(cont / "checkpoints" / "latest.ckpt") == oracle::slurp(full / "checkpoints" / "latest.ckpt"),
            "final checkpoints differ");
  o.note("TTUR exact over 300 epochs; lr(225) = (1e-4, 4e-4); buffer max 50, stored " + fmt(100 * frac, 4) +
         "%; resumed 4-epoch history identical");
  return o;
}

// 7. Toy end-to-end ---------------------------------------------------------------

struct RunSummary {
  int exit = -1;
  double rel = NAN;
  std::vector<double> d_loss;
  double seconds = 0;
};

RunSummary toy_run(const RunConfig& cfg, const fs::path& out) {
  RunSummary r;
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(out);
  std::ostringstream log;
  TrainArgs args;
  args.quiet = true;
  r.exit = guarded(std::cerr, [&] { return cmd_train(cfg, out, args, log); });
  r.seconds = seconds_since(t0);
  if (r.exit != kExitOk) return r;
  const auto rows = oracle::read_csv(out / "loss_log.csv");
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!rows[i][2].empty()) r.d_loss.push_back(std::stod(rows[i][2]));
  r.rel = std::stod(rows.back()[6]);
  return r;
}

double tail_variance(const std::vector<double>& v, std::size_t n) {
  if (v.size() < n) return NAN;
  double mean = 0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) mean += v[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) var += (v[i] - mean) * (v[i] - mean);
  return var / static_cast<double>(n - 1);
}

Outcome criterion_toy(const fs::path& work) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig base = parse_config(R"(
input_size = 64
unet_base_channels = 8
unet_max_channels = 64
disc_base_channels = 8
batch_size = 4
epochs_constant = 60
epochs_decay = 60
lambda = 100
seed = 7
synth_count = 600
synth_size = 64
)");
  const fs::path data = work / "toy_data";
  fs::remove_all(data);
  std::ostringstream log;
  if (cmd_synth_data(base, data, log) != kExitOk) {
    o.require(false, "synth-data failed");
    return o;
  }
  base.data_dir = data.string();
  const auto n_train = read_manifest(data / "train.txt").size(), n_test = read_manifest(data / "test.txt").size();
  o.require(n_train == 500 && n_test == 100, "split " + std::to_string(n_train) + "/" + std::to_string(n_test));

  RunConfig l1 = base;
  l1.gan.adversarial = false;
  RunConfig adv = base;
  RunConfig adv_nosn = base;
  adv_nosn.gan.unet.use_spectral_norm = false;
  adv_nosn.gan.disc_spectral_norm = false;

  std::cerr << "[7] L1-only run\n";
  const RunSummary r_l1 = toy_run(l1, work / "toy_l1");
  std::cerr << "[7]   exit " << r_l1.exit << " rel " << r_l1.rel << " in " << r_l1.seconds << " s\n[7] adversarial run\n";
  const RunSummary r_adv = toy_run(adv, work / "toy_adv");
  std::cerr << "[7]   exit " << r_adv.exit << " rel " << r_adv.rel << " in " << r_adv.seconds
            << " s\n[7] adversarial run without spectral norm\n";
  const RunSummary r_nosn = toy_run(adv_nosn, work / "toy_adv_nosn");
  std::cerr << "[7]   exit " << r_nosn.exit << " rel " << r_nosn.rel << " in " << r_nosn.seconds << " s\n";

  o.require(r_l1.exit == kExitOk, "L1-only run exited " + std::to_string(r_l1.exit));
  o.require(r_adv.exit == kExitOk, "adversarial run exited " + std::to_string(r_adv.exit));
  o.require(r_nosn.exit == kExitOk, "no-SN run exited " + std::to_string(r_nosn.exit));
  o.require(r_l1.rel < 0.25, "L1-only rel " + fmt(r_l1.rel));
  o.require(r_adv.rel < 0.25, "adversarial rel " + fmt(r_adv.rel));
  o.require(r_adv.rel <= 1.5 * r_l1.rel, "adversarial rel " + fmt(r_adv.rel) + " > 1.5x L1-only " + fmt(r_l1.rel));
  const double v_sn = tail_variance(r_adv.d_loss, 20), v_nosn = tail_variance(r_nosn.d_loss, 20);
  o.require(v_sn <= v_nosn, "d_loss variance with SN " + fmt(v_sn) + " > without " + fmt(v_nosn));
  const double secs = seconds_since(t0);
  o.require(secs < 45 * 60, "runtime " + fmt(secs) + " s exceeds 45 min");
  o.note("rel L1 " + fmt(r_l1.rel) + ", adv " + fmt(r_adv.rel) + " (ratio " + fmt(r_adv.rel / r_l1.rel, 3) +
         "), adv no-SN " + fmt(r_nosn.rel) + "; d_loss var last 20 epochs SN " + fmt(v_sn, 3) + " vs no-SN " +
         fmt(v_nosn, 3) + "; " + fmt(secs / 60, 3) + " min");
  return o;
}

// 8. CNN-CRF smoke run --------------------------------------------------------------

Outcome criterion_crf_path(const fs::path& work) {
  Outcome o;
  RunConfig cfg = parse_config(R"(
generator = cnn_crf
input_size = 64
disc_base_channels = 8
synth_count = 80
synth_size = 64
split_ratio = 0.8
seed = 8
)");
  const fs::path data = work / "crf_data", run = work / "crf_run";
  fs::remove_all(data);
  fs::remove_all(run);
  std::ostringstream log;
  if (cmd_synth_data(cfg, data, log) != kExitOk) {
    o.require(false, "synth-data failed");
    return o;
  }
  cfg.data_dir = data.string();
  set_total_epochs(cfg.gan, 5);
  const auto n_train = read_manifest(data / "train.txt").size();
  o.require(n_train == 64, "train split has " + std::to_string(n_train) + " samples");
  TrainArgs args;
  args.quiet = true;
  const int exit = guarded(std::cerr, [&] { return cmd_train(cfg, run, args, log); });
  o.require(exit == kExitOk, "cmd_train exited " + std::to_string(exit));
  if (exit != kExitOk) return o;

  const auto steps = oracle::read_csv(run / "crf_steps.csv");
  bool finite = true, nonneg = true;
  double beta_min = 1e9;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    finite = finite && std::isfinite(std::stod(steps[i][1]));
    for (std::size_t k = 2; k < steps[i].size(); ++k) {
      const double b = std::stod(steps[i][k]);
      nonneg = nonneg && b >= 0.0;
      beta_min = std::min(beta_min, b);
    }
  }
  const std::size_t expected_steps = 5 * ((n_train + 3) / 4);
  o.require(steps.size() == expected_steps + 1, "logged " + std::to_string(steps.size() - 1) + " steps");
  o.require(finite, "non-finite NLL in a step");
  o.require(nonneg, "beta went negative");
  const auto epochs = oracle::read_csv(run / "crf_log.csv");
  o.require(epochs.size() == 6, "crf_log.csv has " + std::to_string(epochs.size() - 1) + " epochs");

  // Reload the trained model and check piecewise constancy on the
  // superpixels segmented independently from the same images.
  TrainState state(cfg.gan);
  checkpoint_load(state, run / "checkpoints" / "latest.ckpt");
  const auto test = load_manifest_samples(data / "test.txt", DepthFormat::pfm);
  long broken = 0, nodes = 0;
  for (const auto& s : test) {
    Tensorf x = s.rgb;
    x.array() = x.array() * 2.0f - 1.0f;
    const Tensorf pred = state.predict(stack(std::vector<Tensorf>{x}));
    const SuperpixelGraph g =
        segment_superpixels(s.rgb, cfg.gan.crf.superpixels, cfg.gan.crf.method, cfg.gan.crf.slic);
    for (const auto& px : g.node_pixels) {
      ++nodes;
      for (Index p : px) broken += pred[p] != pred[px[0]];
    }
  }
  o.require(broken == 0, std::to_string(broken) + " pixels deviate from their superpixel value");
  o.note(std::to_string(steps.size() - 1) + " steps on 64 samples, NLL finite, min beta " + fmt(beta_min) + "; " +
         std::to_string(test.size()) + " predictions constant on " + std::to_string(nodes) + " superpixels");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for datasets and runs")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", criterion_gradients},
      {"CRF oracles", criterion_crf},
      {"spectral norm", criterion_spectral},
      {"patch discriminator", criterion_discriminator},
      {"metrics", criterion_metrics},
      {"stabilizers and resume", [&] { return criterion_stabilizers(work); }},
      {"toy end-to-end", [&] { return criterion_toy(work); }},
      {"CNN-CRF path", [&] { return criterion_crf_path(work); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::string detail;
    for (const auto& s : o.pass ? o.notes : o.failures) detail += (detail.empty() ? "" : "; ") + s;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << detail << std::endl;
  }
  return all ? 0 : 1;
}
