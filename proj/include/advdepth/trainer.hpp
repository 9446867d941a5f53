#pragma once

#include "advdepth/crf.hpp"
#include "advdepth/data.hpp"
#include "advdepth/losses.hpp"
#include "advdepth/metrics.hpp"
#include "advdepth/nets.hpp"
#include "advdepth/optim.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace advdepth {

enum class GeneratorKind { unet, cnn_crf };

struct GanConfig {
  double base_lr = 2e-4;
  double disc_lr_multiplier = 4.0;
  int epochs_constant = 150;
  int epochs_decay = 150;
  int buffer_capacity = 50;
  double lambda = 100.0;
  int batch_size = 4;
  std::uint64_t seed = 0;
  GeneratorKind generator_kind = GeneratorKind::unet;
  bool adversarial = true;
  AdversarialForm adversarial_form = AdversarialForm::nonsaturating;
  UNetSpec unet;  // input_size, dropout and spectral flag live here
  int disc_base_channels = 64;
  bool disc_spectral_norm = true;
  CrfOptions crf;
  double crf_mu = 1.0;  // weight of the CRF likelihood in the generator objective
  double d_min = 0.5;
  double d_max = 10.0;
  AugmentOptions augment;  // crop_size 0 means crop to unet.input_size
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint

  int total_epochs() const noexcept { return epochs_constant + epochs_decay; }
  double disc_lr(double g_lr) const noexcept { return g_lr * disc_lr_multiplier; }
  PatchDiscriminatorSpec discriminator_spec() const;
  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

/// (generator lr, discriminator lr) for an epoch: constant for
/// epochs_constant epochs, then linear decay reaching zero at total_epochs.
std::pair<double, double> lr_at_epoch(const GanConfig& cfg, int epoch);

/// History pool of generated (rgb, fake depth) pairs fed to the discriminator.
class ReplayBuffer {
 public:
  using Pair = std::pair<Tensorf, Tensorf>;

  explicit ReplayBuffer(int capacity = 50);

  /// Below capacity: store and return `fresh`. At capacity: with probability
  /// 1/2 return a uniformly chosen stored pair and put `fresh` in its slot,
  /// otherwise return `fresh`.
  Pair exchange(Pair fresh, Rng& rng);

  int capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return stored_.size(); }
  const std::vector<Pair>& stored() const noexcept { return stored_; }
  std::vector<Pair>& stored() noexcept { return stored_; }

 private:
  int capacity_;
  std::vector<Pair> stored_;
};

/// One row of the per-epoch log. Losses are means over the epoch's steps.
struct EpochRecord {
  int epoch = 0;
  long step = 0;
  std::optional<double> d_loss;
  double g_adv = 0.0;
  double g_l1 = 0.0;
  double g_total = 0.0;
  std::optional<double> crf_nll;
  std::vector<double> beta;
  MetricsReport metrics;
  bool operator==(const EpochRecord&) const = default;
};

struct StepResult {
  LossBundle losses;
  std::optional<double> crf_nll;
};

/// Thrown when a loss or gradient turns non-finite; carries the last bundle.
class NanAbort : public NumericError {
 public:
  NanAbort(const std::string& what, LossBundle last) : NumericError(what), last_(std::move(last)) {}
  const LossBundle& last() const noexcept { return last_; }

 private:
  LossBundle last_;
};

struct TrainState {
  GanConfig config;
  std::unique_ptr<UNet<float>> unet;
  std::unique_ptr<CrfGenerator<float>> crf;
  std::unique_ptr<PatchDiscriminator<float>> disc;
  Adam<float> g_opt;
  Adam<float> d_opt;
  ReplayBuffer buffer;
  Rng rng;
  int epoch = 0;  // next epoch to run
  long step = 0;
  std::vector<EpochRecord> history;

  explicit TrainState(const GanConfig& cfg);

  Network<float>& generator();
  /// Normalized prediction [N,1,H,W] for normalized rgb [N,3,H,W].
  Tensorf predict(const Tensorf& rgb_norm, Mode mode = Mode::eval);
};

/// One discriminator update (skipped when adversarial training is off) then
/// one generator update on the normalized batch.
StepResult train_step(TrainState& state, const Batch& batch);

/// Metrics of the generator on metric-depth samples (eval mode).
MetricsReport evaluate(TrainState& state, const std::vector<DepthSample>& samples,
                       std::optional<double> depth_cap = std::nullopt);

struct LoopOptions {
  std::optional<fs::path> run_dir;      // CSV logs and checkpoints go here
  std::optional<int> stop_after_epoch;  // run epochs [state.epoch, stop) only
  std::function<void(const TrainState&, const StepResult&)> on_step;
  std::function<void(const TrainState&, const EpochRecord&)> on_epoch;
};

inline constexpr const char* kLossCsvHeader = "epoch,step,d_loss,g_adv,g_l1,g_total,rel,rms,log10,d1,d2,d3";

/// Runs the remaining epochs: seeded shuffle, augmentation, train_step per
/// batch, held-out evaluation and log rows per epoch, checkpoints at the
/// configured cadence.
void train_loop(TrainState& state, const std::vector<DepthSample>& train, const std::vector<DepthSample>& test,
                const LoopOptions& opts = {});

std::string format_epoch_row(const EpochRecord& r);

/// Checkpoint container problems: bad magic, truncation, checksum, version.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// The checkpoint was written for a different model configuration.
class ConfigMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// FNV-1a of the fields that define parameter shapes and model structure.
std::uint64_t config_hash(const GanConfig& cfg);

void checkpoint_save(TrainState& state, const fs::path& path);
/// All-or-nothing: on any error `state` is left untouched.
void checkpoint_load(TrainState& state, const fs::path& path);

}  // namespace advdepth
