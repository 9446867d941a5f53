#pragma once

#include "advdepth/autograd.hpp"
#include "advdepth/ops.hpp"
#include "advdepth/random.hpp"
#include "advdepth/spectral_norm.hpp"

#include <memory>
#include <string>
#include <vector>

namespace advdepth {

/// Xavier (Glorot) uniform init: zero mean, variance 2 / (fan_in + fan_out).
/// For a conv weight [a, b, k, k] fan_in = b k^2 and fan_out = a k^2.
template <typename Scalar>
Tensor<Scalar> xavier_init(const Shape& shape, Rng& rng);

/// Convolution (or transposed convolution) with bias and optional spectral
/// normalization of its weight.
template <typename Scalar>
class ConvLayer {
 public:
  ConvLayer(std::string name, Index in_channels, Index out_channels, int kernel, int stride, int pad,
            bool transposed, bool spectral_norm, Rng& rng);

  Var<Scalar> forward(Var<Scalar> x);
  /// One warm-started power-iteration update of the spectral state.
  void advance_spectral();

  Parameter<Scalar>& weight() noexcept { return weight_; }
  Parameter<Scalar>& bias() noexcept { return bias_; }
  const Parameter<Scalar>& weight() const noexcept { return weight_; }
  /// The weight a forward pass actually uses (normalized when enabled).
  Tensor<Scalar> effective_weight() const;
  bool spectral() const noexcept { return spectral_; }
  bool transposed() const noexcept { return transposed_; }
  int kernel() const noexcept { return kernel_; }
  int stride() const noexcept { return stride_; }
  int pad() const noexcept { return pad_; }
  Index in_channels() const noexcept { return in_; }
  Index out_channels() const noexcept { return out_; }
  SpectralState<Scalar>& spectral_state() noexcept { return sn_; }
  const SpectralState<Scalar>& spectral_state() const noexcept { return sn_; }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Index in_, out_;
  int kernel_, stride_, pad_;
  bool transposed_, spectral_;
  SpectralState<Scalar> sn_;
};

/// Parameter registry shared by the networks.
template <typename Scalar>
class Network {
 public:
  virtual ~Network() = default;
  virtual std::vector<Parameter<Scalar>*> parameters() = 0;
  virtual std::vector<ConvLayer<Scalar>*> conv_layers() = 0;

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
  void advance_spectral() {
    for (auto* l : conv_layers()) l->advance_spectral();
  }
  Index parameter_count() {
    Index n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }
};

struct UNetSpec {
  int input_size = 256;
  int in_channels = 3;
  int base_channels = 64;
  int max_channels = 512;
  double bottleneck_dropout_p = 0.5;
  double leaky_slope = 0.2;
  bool use_spectral_norm = true;

  /// log2(input_size); throws ConfigError unless input_size is a power of two.
  int depth() const;
  /// Output channels of encoder stage i.
  int encoder_channels(int stage) const;
};

/// Encoder-decoder generator. Encoder: stride-2 4x4 convolutions with leaky
/// relu down to a 1x1 bottleneck. Decoder: stride-2 4x4 transposed
/// convolutions with relu, skip concatenation at each resolution, dropout
/// after the bottleneck stage, tanh on the single output channel.
template <typename Scalar>
class UNet : public Network<Scalar> {
 public:
  UNet(const UNetSpec& spec, Rng& rng);

  /// rgb: [3,S,S] or [N,3,S,S] in [-1,1]; returns [1,S,S] / [N,1,S,S] in (-1,1).
  Var<Scalar> forward(Var<Scalar> rgb, Mode mode, Rng& rng);

  std::vector<Parameter<Scalar>*> parameters() override;
  std::vector<ConvLayer<Scalar>*> conv_layers() override;

  const UNetSpec& spec() const noexcept { return spec_; }
  const std::vector<ConvLayer<Scalar>>& encoder() const noexcept { return encoder_; }
  /// decoder()[j] upsamples to the resolution of encoder stage j - 1; the
  /// last element is the bottleneck stage.
  const std::vector<ConvLayer<Scalar>>& decoder() const noexcept { return decoder_; }

  /// Test hook: replace the given skip connection (encoder stage index) with zeros.
  void set_skip_disabled(int stage, bool disabled);

 private:
  UNetSpec spec_;
  std::vector<ConvLayer<Scalar>> encoder_;
  std::vector<ConvLayer<Scalar>> decoder_;
  std::vector<bool> skip_disabled_;
};

template <typename Scalar>
UNet<Scalar> build_unet(const UNetSpec& spec, Rng& rng) {
  return UNet<Scalar>(spec, rng);
}

struct DiscLayerSpec {
  int kernel = 4;
  int stride = 2;
  int channels = 64;
};

struct PatchDiscriminatorSpec {
  std::vector<DiscLayerSpec> layers = default_layers(64);
  int conditioning_channels = 3;
  int target_channels = 1;
  int pad = 1;
  double leaky_slope = 0.2;
  bool use_spectral_norm = true;

  /// k4s2 x3 (b, 2b, 4b), k4s1 (8b), k4s1 (1).
  static std::vector<DiscLayerSpec> default_layers(int base);
};

/// Patch-level discriminator over channel-concatenated (rgb, depth) pairs,
/// emitting a per-patch score map after a sigmoid.
template <typename Scalar>
class PatchDiscriminator : public Network<Scalar> {
 public:
  PatchDiscriminator(const PatchDiscriminatorSpec& spec, Rng& rng);

  /// rgb [N,3,H,W] (or unbatched) and depth [N,1,H,W]; returns scores in (0,1).
  Var<Scalar> forward(Var<Scalar> rgb, Var<Scalar> depth);
  /// Same on an already concatenated [N,4,H,W] input.
  Var<Scalar> forward_pair(Var<Scalar> pair);

  std::vector<Parameter<Scalar>*> parameters() override;
  std::vector<ConvLayer<Scalar>*> conv_layers() override;
  const PatchDiscriminatorSpec& spec() const noexcept { return spec_; }

 private:
  PatchDiscriminatorSpec spec_;
  std::vector<ConvLayer<Scalar>> layers_;
};

template <typename Scalar>
PatchDiscriminator<Scalar> build_patch_discriminator(const PatchDiscriminatorSpec& spec, Rng& rng) {
  return PatchDiscriminator<Scalar>(spec, rng);
}

/// Receptive field of one output unit: r = 1, then r = stride (r - 1) + kernel
/// walking the layers from last to first.
int receptive_field(const std::vector<DiscLayerSpec>& layers);

/// Input window [begin, end) along one axis seen by output cell `cell`
/// (may extend past the image into the padding).
std::pair<Index, Index> receptive_window(const std::vector<DiscLayerSpec>& layers, int pad, Index cell);

/// Spatial extent of the score map for an input extent.
Index score_map_extent(const std::vector<DiscLayerSpec>& layers, int pad, Index input_extent);

struct UnaryCnnSpec {
  int patch_size = 32;
  int base_channels = 16;
  int max_channels = 128;
  double leaky_slope = 0.2;
  bool use_spectral_norm = true;
};

/// Per-superpixel depth regressor: stride-2 convolutions down to 4x4, then a
/// 4x4 valid convolution to one value, squashed by tanh.
template <typename Scalar>
class UnaryCnn : public Network<Scalar> {
 public:
  UnaryCnn(const UnaryCnnSpec& spec, Rng& rng);

  /// patches [G,3,P,P] -> h [G].
  Var<Scalar> forward(Var<Scalar> patches);

  std::vector<Parameter<Scalar>*> parameters() override;
  std::vector<ConvLayer<Scalar>*> conv_layers() override;
  const UnaryCnnSpec& spec() const noexcept { return spec_; }

 private:
  UnaryCnnSpec spec_;
  std::vector<ConvLayer<Scalar>> layers_;
};

}  // namespace advdepth
