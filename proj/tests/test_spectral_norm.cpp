#include "advdepth/nets.hpp"
#include "advdepth/spectral_norm.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace advdepth;

namespace {

Tensord as_tensor(const Eigen::MatrixXd& m) {
  Tensord t({m.rows(), m.cols()});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
  return t;
}

Eigen::MatrixXd as_matrix(const Tensord& t) {
  const Index rows = t.dim(0), cols = t.size() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = t[i * cols + j];
  return m;
}

}  // namespace

TEST_SUITE("spectral_norm") {

TEST_CASE("diagonal and permutation matrices") {
  SpectralState<double> s1;
  s1.iterations_per_update = 30;
  CHECK(estimate_sigma(Tensord::from({2, 2}, {3, 0, 0, 1}), s1) == doctest::Approx(3.0).epsilon(1e-9));
  SpectralState<double> s2;
  s2.iterations_per_update = 30;
  CHECK(estimate_sigma(Tensord::from({2, 2}, {0, 1, 1, 0}), s2) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero matrix is rejected") {
  SpectralState<double> s;
  CHECK_THROWS_AS(estimate_sigma(Tensord::zeros({3, 3}), s), InvalidArgument);
  CHECK_THROWS_AS(apply_spectral_norm(Tensord::zeros({3, 3}), s), InvalidArgument);
}

TEST_CASE("random 64x64 matrix converges to the SVD value within 50 iterations") {
  Rng rng(8);
  const Tensord w = oracle::random_tensor({64, 64}, rng);
  SpectralState<double> s;
  s.iterations_per_update = 50;
  const double sigma = estimate_sigma(w, s);
  const double ref = oracle::sigma_max(as_matrix(w));
  CHECK(std::fabs(sigma - ref) / ref < 1e-3);
  CHECK(svd_sigma_max(w) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("fixed point: unit spectral norm weight is unchanged") {
  Rng rng(12);
  Tensord w = oracle::random_tensor({8, 12}, rng);
  w.array() /= oracle::sigma_max(as_matrix(w));
  SpectralState<double> s;
  s.iterations_per_update = 50;
  const Tensord n = apply_spectral_norm(w, s);
  CHECK((n.array() - w.array()).abs().maxCoeff() < 1e-6);
}

TEST_CASE("scale invariance") {
  Rng rng(13);
  const Tensord w = oracle::random_tensor({6, 4, 3, 3}, rng);
  for (double c : {0.1, 10.0}) {
    SpectralState<double> a, b;
    a.iterations_per_update = b.iterations_per_update = 50;
    const Tensord na = apply_spectral_norm(w, a);
    const Tensord nb = apply_spectral_norm(Tensord(w.shape(), w.array() * c), b);
    CHECK((na.array() - nb.array()).abs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("warm-started single steps track the cold-start estimate") {
  Rng rng(14);
  const Tensord w = oracle::random_tensor({16, 8, 3, 3}, rng);
  SpectralState<double> warm;
  for (int step = 0; step < 100; ++step) power_iterate(w, warm, 1);
  SpectralState<double> cold;
  power_iterate(w, cold, 50);
  CHECK(std::fabs(sigma_from_state(w, warm) - sigma_from_state(w, cold)) / sigma_from_state(w, cold) < 0.01);
}

TEST_CASE("spectral_normalize holds u, v fixed and divides") {
  Rng rng(15);
  Parameter<double> p("w", oracle::random_tensor({4, 6}, rng));
  SpectralState<double> s;
  power_iterate(p.value, s, 5);
  const SpectralState<double> before = s;
  Graph<double> g;
  auto out = spectral_normalize(g.parameter(p), s);
  const double sigma = sigma_from_state(p.value, s);
  CHECK((out.value().array() - p.value.array() / sigma).abs().maxCoeff() < 1e-15);
  CHECK(s.u == before.u);
  CHECK(s.v == before.v);
}

TEST_CASE("conv layers normalize the matrix view [C_out x C_in k k]") {
  Rng rng(16);
  ConvLayer<double> layer("c", 5, 7, 4, 2, 1, false, true, rng);
  for (int i = 0; i < 60; ++i) layer.advance_spectral();
  CHECK(oracle::sigma_max(as_matrix(layer.effective_weight())) == doctest::Approx(1.0).epsilon(1e-3));

  ConvLayer<double> up("t", 7, 5, 4, 2, 1, true, true, rng);
  for (int i = 0; i < 60; ++i) up.advance_spectral();
  CHECK(oracle::sigma_max(as_matrix(up.effective_weight())) == doctest::Approx(1.0).epsilon(1e-3));

  ConvLayer<double> plain("p", 5, 7, 4, 2, 1, false, false, rng);
  CHECK(plain.effective_weight() == plain.weight().value);
}

TEST_CASE("constructed gap: power iteration reaches 1e-3 in at most 50 iterations") {
  Rng rng(17);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 10 + trial, n = 20;
    Eigen::MatrixXd ga(m, m), gb(n, n);
    for (Index i = 0; i < ga.size(); ++i) ga.data()[i] = normal(rng);
    for (Index i = 0; i < gb.size(); ++i) gb.data()[i] = normal(rng);
    const Eigen::MatrixXd U = Eigen::HouseholderQR<Eigen::MatrixXd>(ga).householderQ();
    const Eigen::MatrixXd V = Eigen::HouseholderQR<Eigen::MatrixXd>(gb).householderQ();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, n);
    S(0, 0) = 2.0;
    for (Index i = 1; i < m; ++i) S(i, i) = 1.8 * std::pow(0.9, static_cast<double>(i - 1));
    const Tensord w = as_tensor(U * S * V.transpose());
    SpectralState<double> s;
    power_iterate(w, s, 50);
    CHECK(std::fabs(sigma_from_state(w, s) - 2.0) / 2.0 < 1e-3);
  }
}

}
