#include "advdepth/nets.hpp"

#include <cmath>

namespace advdepth {

template <typename S>
Tensor<S> xavier_init(const Shape& shape, Rng& rng) {
  if (shape.size() < 2) throw DimensionError("rank", "xavier_init needs at least two axes, got " + shape_str(shape));
  Index receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
  const double fan_in = static_cast<double>(shape[1] * receptive);
  const double fan_out = static_cast<double>(shape[0] * receptive);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<S> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>((2.0 * uniform01(rng) - 1.0) * bound);
  return t;
}

template <typename S>
ConvLayer<S>::ConvLayer(std::string name, Index in_channels, Index out_channels, int kernel, int stride, int pad,
                        bool transposed, bool spectral_norm, Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      transposed_(transposed),
      spectral_(spectral_norm) {
  const Shape wshape = transposed ? Shape{in_channels, out_channels, kernel, kernel}
                                  : Shape{out_channels, in_channels, kernel, kernel};
  weight_ = Parameter<S>(name + ".weight", xavier_init<S>(wshape, rng));
  bias_ = Parameter<S>(name + ".bias", Tensor<S>::zeros({out_channels}));
  // Cold start: a few iterations before the first forward pass.
  if (spectral_) power_iterate(weight_.value, sn_, 15);
}

template <typename S>
Tensor<S> ConvLayer<S>::effective_weight() const {
  if (!spectral_) return weight_.value;
  const S sigma = sigma_from_state(weight_.value, sn_);
  return Tensor<S>(weight_.value.shape(), weight_.value.array() / sigma);
}

template <typename S>
Var<S> ConvLayer<S>::forward(Var<S> x) {
  Graph<S>& g = *x.graph;
  Var<S> w = g.parameter(weight_);
  if (spectral_) w = spectral_normalize(w, sn_);
  Var<S> b = g.parameter(bias_);
  return transposed_ ? conv_transpose2d(x, w, b, stride_, pad_) : conv2d(x, w, b, stride_, pad_);
}

template <typename S>
void ConvLayer<S>::advance_spectral() {
  if (spectral_) power_iterate(weight_.value, sn_, sn_.iterations_per_update);
}

int UNetSpec::depth() const {
  if (input_size < 2 || (input_size & (input_size - 1)) != 0)
    throw ConfigError("U-Net input_size must be a power of two >= 2, got " + std::to_string(input_size));
  int d = 0;
  for (int s = input_size; s > 1; s >>= 1) ++d;
  return d;
}

int UNetSpec::encoder_channels(int stage) const {
  long c = static_cast<long>(base_channels) << stage;
  return static_cast<int>(std::min<long>(c, max_channels));
}

template <typename S>
UNet<S>::UNet(const UNetSpec& spec, Rng& rng) : spec_(spec) {
  const int depth = spec_.depth();
  if (spec_.base_channels < 1 || spec_.max_channels < 1) throw ConfigError("U-Net channel counts must be positive");
  if (!(spec_.bottleneck_dropout_p >= 0.0 && spec_.bottleneck_dropout_p < 1.0))
    throw ConfigError("bottleneck dropout must lie in [0,1)");
  const bool sn = spec_.use_spectral_norm;
  Index in = spec_.in_channels;
  for (int i = 0; i < depth; ++i) {
    const Index out = spec_.encoder_channels(i);
    encoder_.emplace_back("unet.enc" + std::to_string(i), in, out, 4, 2, 1, false, sn, rng);
    in = out;
  }
  for (int j = 0; j < depth; ++j) {
    const Index dec_in = (j == depth - 1) ? spec_.encoder_channels(depth - 1) : 2 * spec_.encoder_channels(j);
    const Index dec_out = (j == 0) ? 1 : spec_.encoder_channels(j - 1);
    decoder_.emplace_back("unet.dec" + std::to_string(j), dec_in, dec_out, 4, 2, 1, true, sn, rng);
  }
  skip_disabled_.assign(static_cast<std::size_t>(depth), false);
}

template <typename S>
Var<S> UNet<S>::forward(Var<S> rgb, Mode mode, Rng& rng) {
  const Shape s = rgb.shape();
  if (s.size() != 3 && s.size() != 4)
    throw DimensionError("rank", "U-Net input must be [3,H,W] or [N,3,H,W], got " + shape_str(s));
  const std::size_t r = s.size();
  if (s[r - 3] != spec_.in_channels)
    throw DimensionError("channels", "U-Net expects " + std::to_string(spec_.in_channels) + " input channels, got " + shape_str(s));
  if (s[r - 2] != spec_.input_size) throw DimensionError("height", "U-Net expects " + std::to_string(spec_.input_size) + ", got " + shape_str(s));
  if (s[r - 1] != spec_.input_size) throw DimensionError("width", "U-Net expects " + std::to_string(spec_.input_size) + ", got " + shape_str(s));

  const int depth = static_cast<int>(encoder_.size());
  const S slope = static_cast<S>(spec_.leaky_slope);
  std::vector<Var<S>> enc;
  Var<S> x = rgb;
  for (int i = 0; i < depth; ++i) {
    if (i > 0) x = leaky_relu(x, slope);
    x = encoder_[static_cast<std::size_t>(i)].forward(x);
    enc.push_back(x);
  }
  Var<S> d = decoder_[static_cast<std::size_t>(depth - 1)].forward(relu(enc.back()));
  d = dropout(d, spec_.bottleneck_dropout_p, mode, rng);
  for (int j = depth - 2; j >= 0; --j) {
    Var<S> skip = enc[static_cast<std::size_t>(j)];
    if (skip_disabled_[static_cast<std::size_t>(j)]) skip = skip.graph->constant(Tensor<S>::zeros(skip.shape()));
    d = decoder_[static_cast<std::size_t>(j)].forward(relu(concat_channels(d, skip)));
  }
  return tanh(d);
}

template <typename S>
std::vector<Parameter<S>*> UNet<S>::parameters() {
  std::vector<Parameter<S>*> out;
  for (auto* l : conv_layers()) {
    out.push_back(&l->weight());
    out.push_back(&l->bias());
  }
  return out;
}

template <typename S>
std::vector<ConvLayer<S>*> UNet<S>::conv_layers() {
  std::vector<ConvLayer<S>*> out;
  for (auto& l : encoder_) out.push_back(&l);
  for (auto& l : decoder_) out.push_back(&l);
  return out;
}

template <typename S>
void UNet<S>::set_skip_disabled(int stage, bool disabled) {
  skip_disabled_.at(static_cast<std::size_t>(stage)) = disabled;
}

std::vector<DiscLayerSpec> PatchDiscriminatorSpec::default_layers(int base) {
  return {{4, 2, base}, {4, 2, 2 * base}, {4, 2, 4 * base}, {4, 1, 8 * base}, {4, 1, 1}};
}

template <typename S>
PatchDiscriminator<S>::PatchDiscriminator(const PatchDiscriminatorSpec& spec, Rng& rng) : spec_(spec) {
  if (spec_.layers.empty()) throw ConfigError("discriminator needs at least one layer");
  Index in = spec_.conditioning_channels + spec_.target_channels;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    layers_.emplace_back("disc.l" + std::to_string(i), in, l.channels, l.kernel, l.stride, spec_.pad, false,
                         spec_.use_spectral_norm, rng);
    in = l.channels;
  }
}

template <typename S>
Var<S> PatchDiscriminator<S>::forward(Var<S> rgb, Var<S> depth) {
  return forward_pair(concat_channels(rgb, depth));
}

template <typename S>
Var<S> PatchDiscriminator<S>::forward_pair(Var<S> pair) {
  const S slope = static_cast<S>(spec_.leaky_slope);
  Var<S> x = pair;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(x);
    if (i + 1 < layers_.size()) x = leaky_relu(x, slope);
  }
  return sigmoid(x);
}

template <typename S>
std::vector<Parameter<S>*> PatchDiscriminator<S>::parameters() {
  std::vector<Parameter<S>*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight());
    out.push_back(&l.bias());
  }
  return out;
}

template <typename S>
std::vector<ConvLayer<S>*> PatchDiscriminator<S>::conv_layers() {
  std::vector<ConvLayer<S>*> out;
  for (auto& l : layers_) out.push_back(&l);
  return out;
}

int receptive_field(const std::vector<DiscLayerSpec>& layers) {
  if (layers.empty()) throw InvalidArgument("receptive_field needs a nonempty layer list");
  int r = 1;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) r = it->stride * (r - 1) + it->kernel;
  return r;
}

std::pair<Index, Index> receptive_window(const std::vector<DiscLayerSpec>& layers, int pad, Index cell) {
  Index b = cell, e = cell;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    b = b * it->stride - pad;
    e = e * it->stride - pad + it->kernel - 1;
  }
  return {b, e + 1};
}

Index score_map_extent(const std::vector<DiscLayerSpec>& layers, int pad, Index input_extent) {
  Index n = input_extent;
  for (const auto& l : layers) n = conv_out_extent(n, {l.kernel, l.stride, pad});
  return n;
}

template <typename S>
UnaryCnn<S>::UnaryCnn(const UnaryCnnSpec& spec, Rng& rng) : spec_(spec) {
  const int p = spec_.patch_size;
  if (p < 4 || (p & (p - 1)) != 0) throw ConfigError("unary patch size must be a power of two >= 4");
  Index in = 3;
  int size = p, stage = 0;
  while (size > 4) {
    const Index out = std::min<Index>(static_cast<Index>(spec_.base_channels) << stage, spec_.max_channels);
    layers_.emplace_back("unary.l" + std::to_string(stage), in, out, 4, 2, 1, false, spec_.use_spectral_norm, rng);
    in = out;
    size /= 2;
    ++stage;
  }
  layers_.emplace_back("unary.out", in, 1, 4, 1, 0, false, spec_.use_spectral_norm, rng);
}

template <typename S>
Var<S> UnaryCnn<S>::forward(Var<S> patches) {
  if (patches.shape().size() != 4 || patches.shape()[1] != 3 || patches.shape()[2] != spec_.patch_size ||
      patches.shape()[3] != spec_.patch_size)
    throw DimensionError("patch", "unary CNN expects [G,3," + std::to_string(spec_.patch_size) + "," +
                                      std::to_string(spec_.patch_size) + "], got " + shape_str(patches.shape()));
  const S slope = static_cast<S>(spec_.leaky_slope);
  Var<S> x = patches;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(x);
    if (i + 1 < layers_.size()) x = leaky_relu(x, slope);
  }
  return tanh(reshape(x, {patches.shape()[0]}));
}

template <typename S>
std::vector<Parameter<S>*> UnaryCnn<S>::parameters() {
  std::vector<Parameter<S>*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight());
    out.push_back(&l.bias());
  }
  return out;
}

template <typename S>
std::vector<ConvLayer<S>*> UnaryCnn<S>::conv_layers() {
  std::vector<ConvLayer<S>*> out;
  for (auto& l : layers_) out.push_back(&l);
  return out;
}

template Tensor<float> xavier_init(const Shape&, Rng&);
template Tensor<double> xavier_init(const Shape&, Rng&);
template class ConvLayer<float>;
template class ConvLayer<double>;
template class UNet<float>;
template class UNet<double>;
template class PatchDiscriminator<float>;
template class PatchDiscriminator<double>;
template class UnaryCnn<float>;
template class UnaryCnn<double>;

}  // namespace advdepth
