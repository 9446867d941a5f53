#include "advdepth/trainer.hpp"

#include "advdepth/image.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace advdepth {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

PatchDiscriminatorSpec GanConfig::discriminator_spec() const {
  PatchDiscriminatorSpec s;
  s.layers = PatchDiscriminatorSpec::default_layers(disc_base_channels);
  s.use_spectral_norm = disc_spectral_norm;
  return s;
}

void GanConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(base_lr > 0 && std::isfinite(base_lr), "base_lr must be > 0");
  need(disc_lr_multiplier > 0, "disc_lr_multiplier must be > 0");
  need(epochs_constant >= 0 && epochs_decay >= 0 && total_epochs() >= 1, "need at least one epoch");
  need(buffer_capacity >= 1, "buffer_capacity must be >= 1");
  need(lambda > 0, "lambda must be > 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(crf_mu >= 0, "crf_mu must be >= 0");
  need(d_min > 0 && d_max > d_min, "depth range must satisfy 0 < d_min < d_max");
  need(disc_base_channels >= 1, "disc_base_channels must be >= 1");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  need(unet.bottleneck_dropout_p >= 0 && unet.bottleneck_dropout_p < 1, "dropout_p must lie in [0, 1)");
  need(augment.crop_size >= 0, "crop_size must be >= 0");
  (void)unet.depth();  // input size must be a power of two
  if (adversarial) {
    const PatchDiscriminatorSpec ds = discriminator_spec();
    Index n = augment.crop_size > 0 ? augment.crop_size : unet.input_size;
    for (const auto& l : ds.layers) n = n + 2 * ds.pad < l.kernel ? 0 : (n + 2 * ds.pad - l.kernel) / l.stride + 1;
    need(n >= 1, "input_size " + std::to_string(unet.input_size) + " is too small for the patch discriminator");
  }
}

std::pair<double, double> lr_at_epoch(const GanConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.total_epochs())
    throw InvalidArgument("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs()) + ")");
  double g = cfg.base_lr;
  if (epoch >= cfg.epochs_constant)
    g = cfg.base_lr * (1.0 - static_cast<double>(epoch - cfg.epochs_constant) / static_cast<double>(cfg.epochs_decay));
  return {g, cfg.disc_lr(g)};
}

// ReplayBuffer --------------------------------------------------------------

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("buffer capacity must be >= 1");
}

ReplayBuffer::Pair ReplayBuffer::exchange(Pair fresh, Rng& rng) {
  if (static_cast<int>(stored_.size()) < capacity_) {
    stored_.push_back(fresh);
    return fresh;
  }
  if (uniform01(rng) < 0.5) {
    const std::size_t k = uniform_index(rng, stored_.size());
    std::swap(stored_[k], fresh);
  }
  return fresh;
}

// TrainState ----------------------------------------------------------------

TrainState::TrainState(const GanConfig& cfg) : config(cfg), buffer(cfg.buffer_capacity), rng(cfg.seed) {
  config.validate();
  // Construction order fixes the init stream: generator first, then discriminator.
  if (config.generator_kind == GeneratorKind::unet) {
    unet = std::make_unique<UNet<float>>(config.unet, rng);
  } else {
    crf = std::make_unique<CrfGenerator<float>>(config.crf, rng);
  }
  disc = std::make_unique<PatchDiscriminator<float>>(config.discriminator_spec(), rng);
}

Network<float>& TrainState::generator() {
  if (unet) return *unet;
  return *crf;
}

namespace {

struct GenOut {
  Var<float> dense;
  std::optional<CrfGenerator<float>::Output> crf;
};

GenOut run_generator(TrainState& s, Var<float> rgb, Mode mode) {
  if (s.unet) return {s.unet->forward(rgb, mode, s.rng), std::nullopt};
  auto out = s.crf->forward(rgb);
  return {out.dense, std::move(out)};
}

bool finite(double v) { return std::isfinite(v); }

std::string describe(const LossBundle& b) {
  std::ostringstream os;
  os << "d_loss=" << (b.d_loss ? format_double(*b.d_loss) : std::string("-")) << " g_adv=" << format_double(b.g_adv_loss)
     << " g_l1=" << format_double(b.g_l1_loss) << " g_total=" << format_double(b.g_total)
     << " lambda=" << format_double(b.lambda);
  return os.str();
}

[[noreturn]] void abort_nan(const TrainState& s, const std::string& what, const LossBundle& b) {
  throw NanAbort("non-finite " + what + " at epoch " + std::to_string(s.epoch) + " step " + std::to_string(s.step) +
                     "; last losses: " + describe(b),
                 b);
}

template <typename Net, typename Opt>
void optimizer_step(TrainState& s, Net& net, Opt& opt, double lr, const std::string& who, const LossBundle& b) {
  auto params = net.parameters();
  try {
    opt.step(params, lr);
  } catch (const NumericError& e) {
    abort_nan(s, who + " gradient (" + e.what() + ")", b);
  }
  net.advance_spectral();
}

}  // namespace

Tensorf TrainState::predict(const Tensorf& rgb_norm, Mode mode) {
  Graph<float> g;
  return run_generator(*this, g.constant(rgb_norm), mode).dense.value();
}

StepResult train_step(TrainState& s, const Batch& batch) {
  const auto [g_lr, d_lr] = lr_at_epoch(s.config, s.epoch);
  const Index n = batch.rgb.dim(0);
  StepResult result;
  LossBundle& bundle = result.losses;
  bundle.lambda = s.config.lambda;

  Graph<float> g;
  Var<float> rgb = g.constant(batch.rgb);
  Var<float> target = g.constant(batch.depth);
  GenOut gen = run_generator(s, rgb, Mode::train);

  if (s.config.adversarial) {
    // The discriminator sees buffered fakes, detached from the generator.
    std::vector<Tensorf> rgb_d, fake_d;
    for (Index i = 0; i < n; ++i) {
      auto pair = s.buffer.exchange({batch_item(batch.rgb, i), batch_item(gen.dense.value(), i)}, s.rng);
      rgb_d.push_back(std::move(pair.first));
      fake_d.push_back(std::move(pair.second));
    }
    Graph<float> gd;
    Var<float> real = s.disc->forward(gd.constant(batch.rgb), gd.constant(batch.depth));
    Var<float> fake = s.disc->forward(gd.constant(stack(rgb_d)), gd.constant(stack(fake_d)));
    Var<float> d_loss = discriminator_loss(real, fake);
    bundle.d_loss = d_loss.value()[0];
    if (!finite(*bundle.d_loss)) abort_nan(s, "discriminator loss", bundle);
    gd.backward(d_loss);
    optimizer_step(s, *s.disc, s.d_opt, d_lr, "discriminator", bundle);
  }

  Var<float> total;
  if (s.config.adversarial) {
    Var<float> score = s.disc->forward(rgb, gen.dense);
    auto combined = combined_generator_loss(score, gen.dense, target, s.config.lambda, s.config.adversarial_form);
    total = combined.total;
    bundle.g_adv_loss = combined.bundle.g_adv_loss;
    bundle.g_l1_loss = combined.bundle.g_l1_loss;
  } else {
    Var<float> l1 = l1_loss(gen.dense, target);
    bundle.g_l1_loss = l1.value()[0];
    total = scale(l1, static_cast<float>(s.config.lambda));
  }
  if (gen.crf) {
    Var<float> nll = s.crf->nll(*gen.crf, batch.depth);
    result.crf_nll = nll.value()[0];
    if (!finite(*result.crf_nll)) abort_nan(s, "CRF likelihood", bundle);
    total = total + scale(nll, static_cast<float>(s.config.crf_mu)) + s.crf->regularizer(g);
  }
  bundle.g_total = total.value()[0];
  if (!finite(bundle.g_total) || !finite(bundle.g_l1_loss) || !finite(bundle.g_adv_loss))
    abort_nan(s, "generator loss", bundle);
  g.backward(total);
  optimizer_step(s, s.generator(), s.g_opt, g_lr, "generator", bundle);
  if (s.crf) s.crf->project_beta();
  ++s.step;
  return result;
}

MetricsReport evaluate(TrainState& s, const std::vector<DepthSample>& samples, std::optional<double> depth_cap) {
  // One image per forward pass: float convolutions are not bitwise stable
  // across batch sizes, and per-sample reports must add up to the aggregate.
  MetricsAccumulator acc;
  const Index size = s.config.unet.input_size;
  for (const auto& sample : samples) {
    Tensorf rgb = sample.rgb;
    if (rgb.dim(1) != size || rgb.dim(2) != size) rgb = resize_bilinear(rgb, size, size);
    const Tensorf x(rgb.shape(), rgb.array() * 2.0f - 1.0f);
    const Tensorf pred = s.predict(stack(std::vector<Tensorf>{x}), Mode::eval);
    Tensorf est = denormalize_depth(batch_item(pred, 0), s.config.d_min, s.config.d_max);
    const Tensorf& gt = sample.depth;
    if (est.dim(1) != gt.dim(1) || est.dim(2) != gt.dim(2)) est = resize_bilinear(est, gt.dim(1), gt.dim(2));
    const auto mask = valid_depth_mask(gt, depth_cap);
    acc.add(est, gt, &mask);
  }
  return acc.report();
}

std::string format_epoch_row(const EpochRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.step << ',' << (r.d_loss ? format_double(*r.d_loss) : "") << ',' << format_double(r.g_adv)
     << ',' << format_double(r.g_l1) << ',' << format_double(r.g_total) << ',' << format_double(r.metrics.rel) << ','
     << format_double(r.metrics.rms) << ',' << format_double(r.metrics.log10) << ',' << format_double(r.metrics.delta1)
     << ',' << format_double(r.metrics.delta2) << ',' << format_double(r.metrics.delta3);
  return os.str();
}

namespace {

std::string crf_row(const EpochRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << format_double(r.crf_nll.value_or(NAN));
  for (double b : r.beta) os << ',' << format_double(b);
  return os.str();
}

void write_logs(const fs::path& dir, const TrainState& s) {
  std::ofstream csv(dir / "loss_log.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / "loss_log.csv").string());
  csv << kLossCsvHeader << '\n';
  for (const auto& r : s.history) csv << format_epoch_row(r) << '\n';
  if (s.crf) {
    std::ofstream crf(dir / "crf_log.csv", std::ios::trunc);
    crf << "epoch,nll";
    for (int k = 0; k < kSimilarityKinds; ++k) crf << ",beta" << (k + 1);
    crf << '\n';
    for (const auto& r : s.history) crf << crf_row(r) << '\n';
  }
}

}  // namespace

void train_loop(TrainState& s, const std::vector<DepthSample>& train, const std::vector<DepthSample>& test,
                const LoopOptions& opts) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  const GanConfig& cfg = s.config;
  AugmentOptions aug = cfg.augment;
  if (aug.crop_size == 0) aug.crop_size = cfg.unet.input_size;
  const int stop = std::min(cfg.total_epochs(), opts.stop_after_epoch.value_or(cfg.total_epochs()));
  if (opts.run_dir) {
    std::error_code ec;
    fs::create_directories(*opts.run_dir / "checkpoints", ec);
    if (ec) throw IoError("cannot create " + opts.run_dir->string() + ": " + ec.message());
    write_logs(*opts.run_dir, s);
  }
  std::vector<std::size_t> order(train.size());
  for (; s.epoch < stop; ++s.epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(s.rng, i + 1)]);
    EpochRecord rec;
    rec.epoch = s.epoch;
    double d_sum = 0, adv_sum = 0, l1_sum = 0, tot_sum = 0, nll_sum = 0;
    long steps = 0, d_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<DepthSample> picked;
      for (std::size_t i = start; i < end; ++i) {
        DepthSample smp = augment(train[order[i]], s.rng, aug);
        picked.push_back(std::move(smp));
      }
      std::vector<std::size_t> idx(picked.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const StepResult r = train_step(s, make_batch(picked, idx, cfg.d_min, cfg.d_max));
      if (r.losses.d_loss) {
        d_sum += *r.losses.d_loss;
        ++d_steps;
      }
      adv_sum += r.losses.g_adv_loss;
      l1_sum += r.losses.g_l1_loss;
      tot_sum += r.losses.g_total;
      nll_sum += r.crf_nll.value_or(0.0);
      ++steps;
      if (opts.on_step) opts.on_step(s, r);
    }
    rec.step = s.step;
    if (d_steps > 0) rec.d_loss = d_sum / static_cast<double>(d_steps);
    rec.g_adv = adv_sum / static_cast<double>(steps);
    rec.g_l1 = l1_sum / static_cast<double>(steps);
    rec.g_total = tot_sum / static_cast<double>(steps);
    if (s.crf) {
      rec.crf_nll = nll_sum / static_cast<double>(steps);
      for (Index k = 0; k < kSimilarityKinds; ++k) rec.beta.push_back(s.crf->beta().value[k]);
    }
    if (!test.empty()) rec.metrics = evaluate(s, test);
    s.history.push_back(rec);
    if (opts.run_dir) {
      std::ofstream csv(*opts.run_dir / "loss_log.csv", std::ios::app);
      csv << format_epoch_row(rec) << '\n';
      if (!csv) throw IoError("cannot append to loss_log.csv");
      if (s.crf) std::ofstream(*opts.run_dir / "crf_log.csv", std::ios::app) << crf_row(rec) << '\n';
    }
    if (opts.on_epoch) opts.on_epoch(s, rec);
    const int done = s.epoch + 1;
    if (opts.run_dir && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      ++s.epoch;  // a checkpoint names the next epoch to run
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", done);
      checkpoint_save(s, *opts.run_dir / "checkpoints" / name);
      --s.epoch;
    }
  }
  if (opts.run_dir) checkpoint_save(s, *opts.run_dir / "checkpoints" / "latest.ckpt");
}

// Checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'D', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_array(const std::string& name, const Tensorf& t) {
    put_string(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put<std::int64_t>(d);
    buf_.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t n) : p_(data), end_(data + n) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  std::pair<std::string, Tensorf> get_array() {
    std::string name = get_string();
    const auto rank = get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw CheckpointError("corrupt checkpoint: bad rank for '" + name + "'");
    Shape shape;
    Index n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = get<std::int64_t>();
      if (d < 1 || d > (std::int64_t{1} << 32)) throw CheckpointError("corrupt checkpoint: bad extent for '" + name + "'");
      shape.push_back(d);
      n *= d;
    }
    need(static_cast<std::size_t>(n) * sizeof(float));
    Tensorf t(shape);
    std::memcpy(t.data(), p_, static_cast<std::size_t>(n) * sizeof(float));
    p_ += n * static_cast<Index>(sizeof(float));
    return {std::move(name), std::move(t)};
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CheckpointError("corrupt checkpoint: truncated");
  }
  const char* p_;
  const char* end_;
};

Tensorf vec_tensor(const SpectralState<float>::Vector& v) {
  Tensorf t({v.size()});
  t.array() = v.array();
  return t;
}

struct NamedArrays {
  std::vector<std::pair<std::string, Tensorf*>> params;  // destination tensors
  std::vector<std::pair<std::string, SpectralState<float>*>> spectral;
};

NamedArrays collect(Network<float>& net, const std::string& prefix) {
  NamedArrays out;
  for (auto* p : net.parameters()) out.params.emplace_back(prefix + ".param:" + p->name, &p->value);
  for (auto* l : net.conv_layers())
    if (l->spectral()) out.spectral.emplace_back(prefix + ".sn:" + l->weight().name, &l->spectral_state());
  return out;
}

void put_net(Writer& w, Network<float>& net, const Adam<float>& opt, const std::string& prefix) {
  const NamedArrays a = collect(net, prefix);
  for (const auto& [name, t] : a.params) w.put_array(name, *t);
  for (const auto& [name, st] : a.spectral) {
    w.put_array(name + ".u", vec_tensor(st->u));
    w.put_array(name + ".v", vec_tensor(st->v));
  }
  for (const auto& [name, m] : opt.moments()) {
    w.put_array(prefix + ".adam_m:" + name, m.m);
    w.put_array(prefix + ".adam_v:" + name, m.v);
  }
}

void put_metrics(Writer& w, const MetricsReport& m) {
  for (double v : {m.rel, m.sq_rel, m.log10, m.rms, m.rms_log, m.delta1, m.delta2, m.delta3}) w.put(v);
  w.put<std::int64_t>(m.n_pixels);
  w.put<std::int64_t>(m.clamped_pixels);
}

MetricsReport get_metrics(Reader& r) {
  MetricsReport m;
  for (double* v : {&m.rel, &m.sq_rel, &m.log10, &m.rms, &m.rms_log, &m.delta1, &m.delta2, &m.delta3}) *v = r.get<double>();
  m.n_pixels = r.get<std::int64_t>();
  m.clamped_pixels = r.get<std::int64_t>();
  return m;
}

}  // namespace

std::uint64_t config_hash(const GanConfig& c) {
  std::ostringstream os;
  os << "gen=" << (c.generator_kind == GeneratorKind::unet ? "unet" : "cnn_crf");
  if (c.generator_kind == GeneratorKind::unet) {
    os << ";size=" << c.unet.input_size << ";in=" << c.unet.in_channels << ";base=" << c.unet.base_channels
       << ";max=" << c.unet.max_channels << ";sn=" << c.unet.use_spectral_norm;
  } else {
    const auto& u = c.crf.unary;
    os << ";patch=" << u.patch_size << ";base=" << u.base_channels << ";max=" << u.max_channels
       << ";sn=" << u.use_spectral_norm << ";kinds=" << kSimilarityKinds;
  }
  os << ";disc=" << c.disc_base_channels << ";dsn=" << c.disc_spectral_norm;
  const std::string s = os.str();
  return fnv1a(s.data(), s.size());
}

void checkpoint_save(TrainState& s, const fs::path& path) {
  Writer w;
  w.buffer().append(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(config_hash(s.config));
  Writer arrays;
  put_net(arrays, s.generator(), s.g_opt, "G");
  put_net(arrays, *s.disc, s.d_opt, "D");
  for (std::size_t i = 0; i < s.buffer.size(); ++i) {
    arrays.put_array("buffer.rgb:" + std::to_string(i), s.buffer.stored()[i].first);
    arrays.put_array("buffer.fake:" + std::to_string(i), s.buffer.stored()[i].second);
  }
  // Count arrays by re-walking: cheaper to track while writing.
  std::size_t n_arrays = s.generator().parameters().size() + s.disc->parameters().size() + s.g_opt.moments().size() * 2 +
                         s.d_opt.moments().size() * 2 + s.buffer.size() * 2;
  for (auto* l : s.generator().conv_layers()) n_arrays += l->spectral() ? 2 : 0;
  for (auto* l : s.disc->conv_layers()) n_arrays += l->spectral() ? 2 : 0;
  w.put<std::uint64_t>(n_arrays);
  w.buffer() += arrays.buffer();
  w.put<std::int64_t>(s.epoch);
  w.put<std::int64_t>(s.step);
  w.put<std::int64_t>(s.g_opt.step_count());
  w.put<std::int64_t>(s.d_opt.step_count());
  w.put_string(rng_state(s.rng));
  w.put<std::uint64_t>(s.history.size());
  for (const auto& r : s.history) {
    w.put<std::int64_t>(r.epoch);
    w.put<std::int64_t>(r.step);
    w.put<std::uint8_t>(r.d_loss.has_value());
    w.put(r.d_loss.value_or(0.0));
    w.put(r.g_adv);
    w.put(r.g_l1);
    w.put(r.g_total);
    w.put<std::uint8_t>(r.crf_nll.has_value());
    w.put(r.crf_nll.value_or(0.0));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.beta.size()));
    for (double b : r.beta) w.put(b);
    put_metrics(w, r.metrics);
  }
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.put(sum);

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("checkpoint write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

void checkpoint_load(TrainState& s, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = sizeof kMagic + 4 + 8;
  if (data.size() < header + 8 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError("corrupt checkpoint: " + path.string() + " is not a checkpoint or is truncated");
  Reader head(data.data() + sizeof kMagic, data.size() - sizeof kMagic);
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
  if (fnv1a(data.data(), data.size() - 8) != stored_sum)
    throw CheckpointError("corrupt checkpoint: checksum mismatch in " + path.string());
  const auto hash = head.get<std::uint64_t>();
  if (hash != config_hash(s.config))
    throw ConfigMismatch("checkpoint " + path.string() + " was written for a different model configuration");

  Reader r(data.data() + header, data.size() - header - 8);
  const auto n_arrays = r.get<std::uint64_t>();
  std::map<std::string, Tensorf> arrays;
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    auto [name, t] = r.get_array();
    arrays.emplace(std::move(name), std::move(t));
  }
  const auto epoch = r.get<std::int64_t>();
  const auto step = r.get<std::int64_t>();
  const auto g_steps = r.get<std::int64_t>();
  const auto d_steps = r.get<std::int64_t>();
  const std::string rng_text = r.get_string();
  std::vector<EpochRecord> history(r.get<std::uint64_t>());
  for (auto& rec : history) {
    rec.epoch = static_cast<int>(r.get<std::int64_t>());
    rec.step = r.get<std::int64_t>();
    const bool has_d = r.get<std::uint8_t>();
    const double d = r.get<double>();
    if (has_d) rec.d_loss = d;
    rec.g_adv = r.get<double>();
    rec.g_l1 = r.get<double>();
    rec.g_total = r.get<double>();
    const bool has_nll = r.get<std::uint8_t>();
    const double nll = r.get<double>();
    if (has_nll) rec.crf_nll = nll;
    rec.beta.resize(r.get<std::uint32_t>());
    for (double& b : rec.beta) b = r.get<double>();
    rec.metrics = get_metrics(r);
  }
  if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  if (epoch < 0 || epoch > s.config.total_epochs()) throw CheckpointError("checkpoint epoch out of range");

  // Validate everything against the live state before touching it.
  auto take = [&](const std::string& name, const Shape& shape) -> Tensorf& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError("checkpoint lacks array '" + name + "'");
    if (it->second.shape() != shape)
      throw ConfigMismatch("array '" + name + "' has shape " + shape_str(it->second.shape()) + ", model expects " +
                           shape_str(shape));
    return it->second;
  };
  const NamedArrays g = collect(s.generator(), "G"), dn = collect(*s.disc, "D");
  for (const auto* a : {&g, &dn}) {
    for (const auto& [name, t] : a->params) take(name, t->shape());
    for (const auto& [name, st] : a->spectral) {
      auto u = arrays.find(name + ".u"), v = arrays.find(name + ".v");
      if (u == arrays.end() || v == arrays.end()) throw CheckpointError("checkpoint lacks spectral state '" + name + "'");
      if (st->initialized() && (u->second.size() != st->u.size() || v->second.size() != st->v.size()))
        throw ConfigMismatch("spectral state '" + name + "' has the wrong size");
    }
  }
  for (const auto& [name, t] : arrays) {
    for (const char* prefix : {"G.adam_m:", "D.adam_m:"}) {
      if (name.rfind(prefix, 0) != 0) continue;
      std::string partner = name;
      partner.replace(0, std::strlen(prefix), std::string(prefix, 2) + "adam_v:");
      auto it = arrays.find(partner);
      if (it == arrays.end() || it->second.shape() != t.shape())
        throw CheckpointError("checkpoint moment '" + name + "' has no matching second moment");
    }
  }
  std::vector<ReplayBuffer::Pair> buffered;
  for (std::size_t i = 0;; ++i) {
    auto a = arrays.find("buffer.rgb:" + std::to_string(i)), b = arrays.find("buffer.fake:" + std::to_string(i));
    if (a == arrays.end() || b == arrays.end()) break;
    buffered.emplace_back(a->second, b->second);
  }
  if (static_cast<int>(buffered.size()) > s.buffer.capacity()) throw ConfigMismatch("buffer larger than its capacity");
  Rng rng_new;
  {
    std::istringstream is(rng_text);
    is >> rng_new;
    if (!is) throw CheckpointError("corrupt checkpoint: bad rng state");
  }

  // Commit.
  for (const auto* a : {&g, &dn}) {
    for (const auto& [name, t] : a->params) *t = arrays.at(name);
    for (const auto& [name, st] : a->spectral) {
      st->u = arrays.at(name + ".u").array().matrix();
      st->v = arrays.at(name + ".v").array().matrix();
    }
  }
  auto restore_moments = [&](Adam<float>& opt, const std::string& prefix) {
    opt.moments().clear();
    const std::string pm = prefix + ".adam_m:", pv = prefix + ".adam_v:";
    for (const auto& [name, t] : arrays)
      if (name.rfind(pm, 0) == 0) {
        const std::string key = name.substr(pm.size());
        opt.moments()[key] = {t, arrays.at(pv + key)};
      }
  };
  restore_moments(s.g_opt, "G");
  restore_moments(s.d_opt, "D");
  s.g_opt.set_step_count(g_steps);
  s.d_opt.set_step_count(d_steps);
  s.buffer.stored() = std::move(buffered);
  s.rng = rng_new;
  s.epoch = static_cast<int>(epoch);
  s.step = step;
  s.history = std::move(history);
}

}  // namespace advdepth
