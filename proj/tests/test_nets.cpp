#include "advdepth/nets.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace advdepth;

namespace {

UNetSpec small_unet(int size) {
  UNetSpec s;
  s.input_size = size;
  s.base_channels = 4;
  s.max_channels = 16;
  return s;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("xavier init statistics") {
  Rng rng(1);
  std::vector<double> v;
  for (int i = 0; i < 4; ++i) {
    const Tensord t = xavier_init<double>({50, 50}, rng);
    v.insert(v.end(), t.data(), t.data() + t.size());
  }
  const double n = static_cast<double>(v.size());
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  CHECK(std::fabs(var - 0.02) < 0.002);
  CHECK(std::fabs(mean) < 3 * std::sqrt(0.02 / n));

  Rng a(5), b(5);
  CHECK(xavier_init<double>({8, 3, 4, 4}, a) == xavier_init<double>({8, 3, 4, 4}, b));
}

TEST_CASE("U-Net depth follows log2 of the input size") {
  CHECK(small_unet(256).depth() == 8);
  CHECK(small_unet(64).depth() == 6);
  CHECK(small_unet(16).depth() == 4);
  CHECK_THROWS_AS(small_unet(100).depth(), ConfigError);
  Rng rng(0);
  CHECK_THROWS_AS(UNet<float>(small_unet(48), rng), ConfigError);
  UNet<float> net(small_unet(256), rng);
  CHECK(net.encoder().size() == 8);
}

TEST_CASE("U-Net output shape, range and eval determinism") {
  Rng rng(2);
  UNet<double> net(small_unet(64), rng);
  Graph<double> g;
  auto x = g.constant(oracle::random_tensor({3, 64, 64}, rng));
  Rng r1(7), r2(8);
  const Tensord a = net.forward(x, Mode::eval, r1).value();
  const Tensord b = net.forward(x, Mode::eval, r2).value();
  CHECK(a.shape() == Shape{1, 64, 64});
  CHECK(a.array().abs().maxCoeff() < 1.0);
  CHECK(a == b);

  auto batch = g.constant(oracle::random_tensor({2, 3, 64, 64}, rng));
  CHECK(net.forward(batch, Mode::train, r1).shape() == Shape{2, 1, 64, 64});
  CHECK_THROWS_AS(net.forward(g.constant(Tensord::zeros({3, 32, 32})), Mode::eval, r1), DimensionError);
}

TEST_CASE("U-Net decoder input channels = previous decoder output + skip") {
  Rng rng(3);
  UNetSpec spec = small_unet(64);
  spec.max_channels = 8;
  UNet<float> net(spec, rng);
  const auto& enc = net.encoder();
  const auto& dec = net.decoder();
  const std::size_t d = enc.size();
  CHECK(dec[d - 1].in_channels() == enc[d - 1].out_channels());
  for (std::size_t j = 0; j + 1 < d; ++j) CHECK(dec[j].in_channels() == dec[j + 1].out_channels() + enc[j].out_channels());
  CHECK(dec[0].out_channels() == 1);
  for (const auto& l : enc) CHECK((l.kernel() == 4 && l.stride() == 2 && !l.transposed()));
  for (const auto& l : dec) CHECK((l.kernel() == 4 && l.stride() == 2 && l.transposed()));
}

TEST_CASE("every skip connection is live") {
  Rng rng(4);
  UNetSpec spec = small_unet(32);
  spec.use_spectral_norm = false;
  UNet<double> net(spec, rng);
  Graph<double> g;
  auto x = g.constant(oracle::random_tensor({3, 32, 32}, rng));
  Rng r(0);
  const Tensord base = net.forward(x, Mode::eval, r).value();
  for (int stage = 0; stage + 1 < spec.depth(); ++stage) {
    net.set_skip_disabled(stage, true);
    const Tensord cut = net.forward(x, Mode::eval, r).value();
    net.set_skip_disabled(stage, false);
    CHECK_MESSAGE((cut.array() - base.array()).abs().maxCoeff() > 0.0, "skip " << stage);
  }
}

TEST_CASE("receptive field recurrence") {
  CHECK(receptive_field(PatchDiscriminatorSpec::default_layers(64)) == 70);
  CHECK(receptive_field({{4, 2, 1}}) == 4);
  CHECK(receptive_field({{3, 1, 1}, {3, 1, 1}}) == 5);
  CHECK_THROWS_AS(receptive_field({}), InvalidArgument);
}

TEST_CASE("score map sizes") {
  const auto layers = PatchDiscriminatorSpec::default_layers(2);
  CHECK(score_map_extent(layers, 1, 256) == 30);
  CHECK(score_map_extent(layers, 1, 64) == 6);
  Rng rng(5);
  PatchDiscriminatorSpec spec;
  spec.layers = layers;
  PatchDiscriminator<float> d(spec, rng);
  Graph<float> g;
  auto rgb = g.constant(Tensorf::constant({1, 3, 64, 64}, 0.3f));
  auto dep = g.constant(Tensorf::constant({1, 1, 64, 64}, -0.2f));
  const Tensorf s = d.forward(rgb, dep).value();
  CHECK(s.shape() == Shape{1, 1, 6, 6});
  CHECK(s.array().minCoeff() > 0.0f);
  CHECK(s.array().maxCoeff() < 1.0f);
}

TEST_CASE("receptive window matches the hand-derived offsets") {
  // Default stack: strides 2,2,2,1,1 (jump 8), pad 1 on every layer, so cell i
  // sees [8 i - 23, 8 i + 47).
  const auto layers = PatchDiscriminatorSpec::default_layers(1);
  for (Index i = 0; i < 30; ++i) {
    const auto [b, e] = receptive_window(layers, 1, i);
    CHECK(b == 8 * i - 23);
    CHECK(e - b == 70);
  }
}

TEST_CASE("unary CNN maps patches to one bounded value each") {
  Rng rng(6);
  UnaryCnnSpec spec;
  spec.patch_size = 16;
  spec.base_channels = 4;
  spec.max_channels = 8;
  UnaryCnn<double> net(spec, rng);
  Graph<double> g;
  const Tensord h = net.forward(g.constant(oracle::random_tensor({5, 3, 16, 16}, rng))).value();
  CHECK(h.shape() == Shape{5});
  CHECK(h.array().abs().maxCoeff() < 1.0);
  CHECK_THROWS_AS(net.forward(g.constant(Tensord::zeros({5, 3, 8, 8}))), DimensionError);
  spec.patch_size = 12;
  CHECK_THROWS_AS(UnaryCnn<double>(spec, rng), ConfigError);
}

}
