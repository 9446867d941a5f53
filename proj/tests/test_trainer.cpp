#include "advdepth/trainer.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <fstream>

using namespace advdepth;

namespace {

GanConfig tiny_config() {
  GanConfig c;
  c.unet.input_size = 32;
  c.unet.base_channels = 4;
  c.unet.max_channels = 16;
  c.disc_base_channels = 4;
  c.epochs_constant = 1;
  c.epochs_decay = 1;
  c.batch_size = 4;
  c.seed = 3;
  c.buffer_capacity = 6;
  return c;
}

std::vector<DepthSample> tiny_data(int n, std::uint64_t seed0 = 100) {
  std::vector<DepthSample> out;
  for (int i = 0; i < n; ++i) out.push_back(synth_scene(seed0 + static_cast<std::uint64_t>(i), 32, 2).sample);
  return out;
}

std::vector<Tensorf> snapshot(Network<float>& net) {
  std::vector<Tensorf> out;
  for (auto* p : net.parameters()) out.push_back(p->value);
  return out;
}

bool any_changed(Network<float>& net, const std::vector<Tensorf>& before) {
  const auto ps = net.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (!(ps[i]->value == before[i])) return true;
  return false;
}

Eigen::VectorXd flat_grads(Network<double>& net) {
  std::vector<double> v;
  for (auto* p : net.parameters()) v.insert(v.end(), p->grad.data(), p->grad.data() + p->grad.size());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule") {
  const GanConfig c;
  CHECK(lr_at_epoch(c, 0) == std::make_pair(2e-4, 8e-4));
  CHECK(lr_at_epoch(c, 150) == std::make_pair(2e-4, 8e-4));
  const auto mid = lr_at_epoch(c, 225);
  CHECK(mid.first == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(mid.second == doctest::Approx(4e-4).epsilon(1e-12));
  CHECK_THROWS(lr_at_epoch(c, -1));
  CHECK_THROWS(lr_at_epoch(c, 300));
  double prev = 2e-4;
  for (int e = 0; e < 300; ++e) {
    const auto [g, d] = lr_at_epoch(c, e);
    CHECK(d == 4.0 * g);
    CHECK(g <= prev);
    CHECK(prev - g <= 2e-4 / 150 + 1e-18);
    prev = g;
  }
  CHECK(prev <= 2e-4 / 150 + 1e-18);
}

TEST_CASE("replay buffer") {
  Rng rng(1);
  ReplayBuffer buf(50);
  auto tag = [](float v) { return ReplayBuffer::Pair{Tensorf::constant({1}, v), Tensorf::constant({1}, v)}; };
  const auto first = buf.exchange(tag(0), rng);
  CHECK(first.first[0] == 0.0f);
  CHECK(buf.size() == 1);
  for (int i = 1; i < 60; ++i) buf.exchange(tag(static_cast<float>(i)), rng);
  CHECK(buf.size() == 50);
  int stored = 0;
  for (int i = 0; i < 10000; ++i) {
    const float v = static_cast<float>(1000 + i);
    stored += buf.exchange(tag(v), rng).first[0] != v;
    REQUIRE(buf.size() == 50);
  }
  CHECK(std::fabs(stored / 10000.0 - 0.5) < 0.03);
}

TEST_CASE("config validation") {
  GanConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.base_lr = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.buffer_capacity = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.lambda = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("one step moves both networks; ablation leaves the discriminator alone") {
  const auto data = tiny_data(4);
  const Batch b = make_batch(data, {0, 1, 2, 3}, 0.5, 10);
  TrainState s(tiny_config());
  const auto g0 = snapshot(s.generator()), d0 = snapshot(*s.disc);
  const StepResult r = train_step(s, b);
  CHECK(any_changed(s.generator(), g0));
  CHECK(any_changed(*s.disc, d0));
  REQUIRE(r.losses.d_loss);
  CHECK(std::isfinite(*r.losses.d_loss));
  CHECK(s.buffer.size() == 4);

  GanConfig cfg = tiny_config();
  cfg.adversarial = false;
  TrainState l1(cfg);
  const auto ld0 = snapshot(*l1.disc);
  const StepResult lr = train_step(l1, b);
  CHECK(!lr.losses.d_loss);
  CHECK(lr.losses.g_adv_loss == 0.0);
  CHECK(lr.losses.g_total == doctest::Approx(cfg.lambda * lr.losses.g_l1_loss));
  CHECK(!any_changed(*l1.disc, ld0));
}

TEST_CASE("very large lambda aligns the generator gradient with pure L1") {
  Rng rng(5);
  UNetSpec us;
  us.input_size = 32;
  us.base_channels = 3;
  us.max_channels = 6;
  us.bottleneck_dropout_p = 0.0;
  UNet<double> gen(us, rng);
  PatchDiscriminatorSpec ds;
  ds.layers = PatchDiscriminatorSpec::default_layers(2);
  PatchDiscriminator<double> disc(ds, rng);
  const Tensord rgb = oracle::random_tensor({2, 3, 32, 32}, rng);
  const Tensord target = oracle::random_tensor({2, 1, 32, 32}, rng);

  auto grads = [&](bool adversarial) {
    Graph<double> g;
    Rng r(0);
    auto x = g.constant(rgb);
    auto pred = gen.forward(x, Mode::eval, r);
    auto t = g.constant(target);
    Var<double> loss = adversarial ? combined_generator_loss(disc.forward(x, pred), pred, t, 1e6).total
                                   : l1_loss(pred, t);
    g.backward(loss);
    return flat_grads(gen);
  };
  const Eigen::VectorXd a = grads(true), b = grads(false);
  CHECK(a.dot(b) / (a.norm() * b.norm()) > 0.99);
}

TEST_CASE("identical config and seed give identical histories") {
  const auto train = tiny_data(8), test = tiny_data(4, 500);
  TrainState a(tiny_config()), b(tiny_config());
  train_loop(a, train, test);
  train_loop(b, train, test);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history == b.history);
  for (const auto& r : a.history) {
    CHECK(std::isfinite(r.g_total));
    CHECK(std::isfinite(*r.d_loss));
    CHECK(std::isfinite(r.metrics.rel));
  }
}

TEST_CASE("spectral-normalized weights stay near unit norm at every epoch") {
  GanConfig cfg = tiny_config();
  cfg.epochs_constant = 2;
  cfg.epochs_decay = 2;
  const auto train = tiny_data(8), test = tiny_data(4, 500);
  TrainState s(cfg);
  LoopOptions opts;
  int epochs_seen = 0;
  opts.on_epoch = [&](const TrainState& st, const EpochRecord&) {
    ++epochs_seen;
    auto& state = const_cast<TrainState&>(st);
    for (Network<float>* net : {&state.generator(), static_cast<Network<float>*>(state.disc.get())})
      for (auto* layer : net->conv_layers()) {
        const Tensorf w = layer->effective_weight();
        const Index rows = w.dim(0);
        Eigen::MatrixXd m(rows, w.size() / rows);
        for (Index i = 0; i < m.rows(); ++i)
          for (Index j = 0; j < m.cols(); ++j) m(i, j) = w[i * m.cols() + j];
        const double sigma = oracle::sigma_max(m);
        CHECK(sigma >= 0.9);
        CHECK(sigma <= 1.1);
      }
  };
  train_loop(s, train, test, opts);
  CHECK(epochs_seen == 4);
}

TEST_CASE("loss CSV: header, empty d_loss column for the ablation") {
  const auto dir = oracle::temp_dir("losscsv");
  GanConfig cfg = tiny_config();
  cfg.adversarial = false;
  TrainState s(cfg);
  LoopOptions opts;
  opts.run_dir = dir;
  train_loop(s, tiny_data(8), tiny_data(4, 500), opts);
  const auto rows = oracle::read_csv(dir / "loss_log.csv");
  REQUIRE(rows.size() == 3);
  CHECK(oracle::slurp(dir / "loss_log.csv").rfind(std::string(kLossCsvHeader) + "\n", 0) == 0);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][2].empty());
  CHECK(std::filesystem::exists(dir / "checkpoints" / "latest.ckpt"));
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = oracle::temp_dir("ckpt");
  const auto data = tiny_data(4);
  const Batch b = make_batch(data, {0, 1, 2, 3}, 0.5, 10);
  TrainState s(tiny_config());
  train_step(s, b);
  s.epoch = 1;
  checkpoint_save(s, dir / "a.ckpt");
  const Tensorf before = s.predict(b.rgb);

  GanConfig other = tiny_config();
  other.seed = 99;  // different init, same structure
  TrainState r(other);
  CHECK(!(r.predict(b.rgb) == before));
  checkpoint_load(r, dir / "a.ckpt");
  CHECK(r.predict(b.rgb) == before);
  CHECK(r.epoch == 1);
  CHECK(r.step == s.step);
  CHECK(r.buffer.size() == s.buffer.size());
  CHECK(rng_state(r.rng) == rng_state(s.rng));
  CHECK(r.g_opt.step_count() == 1);

  // Both continue identically.
  const StepResult x = train_step(s, b), y = train_step(r, b);
  CHECK(x.losses.g_total == y.losses.g_total);
  CHECK(*x.losses.d_loss == *y.losses.d_loss);
}

TEST_CASE("corrupt or mismatched checkpoints leave the state untouched") {
  const auto dir = oracle::temp_dir("ckpt_bad");
  TrainState s(tiny_config());
  checkpoint_save(s, dir / "good.ckpt");
  const std::string bytes = oracle::slurp(dir / "good.ckpt");
  std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  std::ofstream(dir / "flip.ckpt", std::ios::binary) << flipped;
  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint";

  GanConfig other = tiny_config();
  other.seed = 77;
  TrainState t(other);
  const auto w0 = snapshot(t.generator());
  CHECK_THROWS_AS(checkpoint_load(t, dir / "trunc.ckpt"), CheckpointError);
  CHECK_THROWS_AS(checkpoint_load(t, dir / "flip.ckpt"), CheckpointError);
  CHECK_THROWS_AS(checkpoint_load(t, dir / "junk.ckpt"), CheckpointError);
  CHECK_THROWS_AS(checkpoint_load(t, dir / "absent.ckpt"), IoError);
  CHECK(!any_changed(t.generator(), w0));

  GanConfig crf = tiny_config();
  crf.generator_kind = GeneratorKind::cnn_crf;
  TrainState c(crf);
  CHECK_THROWS_AS(checkpoint_load(c, dir / "good.ckpt"), ConfigMismatch);
  CHECK(config_hash(crf) != config_hash(tiny_config()));
  GanConfig lr_only = tiny_config();
  lr_only.base_lr = 1e-3;
  CHECK(config_hash(lr_only) == config_hash(tiny_config()));
}

TEST_CASE("CRF generator trains with nonnegative beta") {
  GanConfig cfg = tiny_config();
  cfg.generator_kind = GeneratorKind::cnn_crf;
  cfg.crf.superpixels = 4;
  cfg.crf.unary.patch_size = 8;
  cfg.crf.unary.base_channels = 2;
  cfg.crf.unary.max_channels = 4;
  TrainState s(cfg);
  LoopOptions opts;
  int steps = 0;
  opts.on_step = [&](const TrainState& st, const StepResult& r) {
    ++steps;
    REQUIRE(r.crf_nll);
    CHECK(std::isfinite(*r.crf_nll));
    CHECK(st.crf->beta().value.array().minCoeff() >= 0.0f);
  };
  train_loop(s, tiny_data(8), tiny_data(4, 500), opts);
  CHECK(steps == 4);
  CHECK(s.history.back().crf_nll);
  CHECK(s.history.back().beta.size() == 2);
}

}
