#include "advdepth/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>

using namespace advdepth;

namespace {

std::vector<double> values(const Tensord& t) { return {t.data(), t.data() + t.size()}; }

void check_close(const MetricsReport& a, const MetricsReport& b, double tol) {
  CHECK(std::fabs(a.rel - b.rel) < tol);
  CHECK(std::fabs(a.sq_rel - b.sq_rel) < tol);
  CHECK(std::fabs(a.log10 - b.log10) < tol);
  CHECK(std::fabs(a.rms - b.rms) < tol);
  CHECK(std::fabs(a.rms_log - b.rms_log) < tol);
  CHECK(std::fabs(a.delta1 - b.delta1) < tol);
  CHECK(std::fabs(a.delta2 - b.delta2) < tol);
  CHECK(std::fabs(a.delta3 - b.delta3) < tol);
  CHECK(a.n_pixels == b.n_pixels);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect prediction") {
  Rng rng(1);
  const Tensord gt = oracle::random_tensor({1, 8, 8}, rng, 0.5, 10.0);
  const MetricsReport r = compute_metrics(gt, gt);
  CHECK(r.rel == 0.0);
  CHECK(r.sq_rel == 0.0);
  CHECK(r.log10 == 0.0);
  CHECK(r.rms == 0.0);
  CHECK(r.rms_log == 0.0);
  CHECK(r.delta1 == 1.0);
  CHECK(r.delta2 == 1.0);
  CHECK(r.delta3 == 1.0);
  CHECK(serialize_report(r, ReportFormat::csv_row) == "0,0,0,0,0,1,1,1,64");
}

TEST_CASE("hand case with the strict delta threshold") {
  const MetricsReport r = compute_metrics(Tensord::from({2}, {2, 5}), Tensord::from({2}, {2, 4}));
  CHECK(r.rel == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(r.rms == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(r.delta1 == 0.5);
  CHECK(r.delta2 == 1.0);
  CHECK(r.delta3 == 1.0);
}

TEST_CASE("matches the per-pixel loop") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Tensord gt = oracle::random_tensor({16, 16}, rng, 0.5, 10.0);
    const Tensord est = oracle::random_tensor({16, 16}, rng, 0.3, 12.0);
    check_close(compute_metrics(est, gt), oracle::metrics(values(est), values(gt)), 1e-9);
  }
}

TEST_CASE("non-positive predictions are clamped and counted") {
  const Tensord gt = Tensord::from({3}, {1.0, 2.0, 3.0});
  const Tensord est = Tensord::from({3}, {-1.0, 0.0, 3.0});
  const MetricsReport r = compute_metrics(est, gt);
  CHECK(r.clamped_pixels == 2);
  check_close(r, oracle::metrics(values(est), values(gt)), 1e-12);
  CHECK(std::isfinite(r.log10));
}

TEST_CASE("valid mask and depth cap") {
  const Tensord gt = Tensord::from({4}, {1.0, 8.0, 5.0, 0.0});
  const Tensord est = Tensord::from({4}, {1.5, 2.0, 5.0, 3.0});
  const auto mask = valid_depth_mask(gt, 7.0);
  CHECK(mask == std::vector<bool>{true, false, true, false});
  const MetricsReport r = compute_metrics(est, gt, &mask);
  CHECK(r.n_pixels == 2);
  CHECK(r.rel == doctest::Approx(0.25));
  CHECK_THROWS_AS(compute_metrics(est, gt), InvalidArgument);
  const std::vector<bool> none(4, false);
  CHECK_THROWS_AS(compute_metrics(est, gt, &none), InvalidArgument);
  CHECK_THROWS_AS(compute_metrics(est, Tensord::constant({5}, 1.0)), DimensionError);
}

TEST_CASE("scale behaviour") {
  Rng rng(3);
  const Tensord gt = oracle::random_tensor({64}, rng, 0.5, 10.0);
  const Tensord est = oracle::random_tensor({64}, rng, 0.5, 10.0);
  const MetricsReport a = compute_metrics(est, gt);
  for (double c : {0.1, 3.0}) {
    const MetricsReport b = compute_metrics(Tensord(est.shape(), est.array() * c), Tensord(gt.shape(), gt.array() * c));
    CHECK(b.rel == doctest::Approx(a.rel).epsilon(1e-12));
    CHECK(b.log10 == doctest::Approx(a.log10).epsilon(1e-12));
    CHECK(b.rms_log == doctest::Approx(a.rms_log).epsilon(1e-12));
    CHECK(b.delta1 == a.delta1);
    CHECK(b.delta2 == a.delta2);
    CHECK(b.delta3 == a.delta3);
    CHECK(b.rms == doctest::Approx(c * a.rms).epsilon(1e-12));
    CHECK(b.sq_rel == doctest::Approx(c * a.sq_rel).epsilon(1e-12));
  }
}

TEST_CASE("delta monotone and permutation invariant") {
  Rng rng(4);
  const Tensord gt = oracle::random_tensor({200}, rng, 0.5, 10.0);
  const Tensord est = oracle::random_tensor({200}, rng, 0.5, 10.0);
  const MetricsReport a = compute_metrics(est, gt);
  CHECK(a.delta1 <= a.delta2);
  CHECK(a.delta2 <= a.delta3);
  std::vector<Index> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensord gp(gt.shape()), ep(est.shape());
  for (Index i = 0; i < 200; ++i) {
    gp[i] = gt[perm[static_cast<std::size_t>(i)]];
    ep[i] = est[perm[static_cast<std::size_t>(i)]];
  }
  check_close(compute_metrics(ep, gp), a, 1e-12);
}

TEST_CASE("accumulator weights every pixel equally") {
  Rng rng(5);
  const Tensord g1 = oracle::random_tensor({10}, rng, 1, 5), e1 = oracle::random_tensor({10}, rng, 1, 5);
  const Tensord g2 = oracle::random_tensor({30}, rng, 1, 5), e2 = oracle::random_tensor({30}, rng, 1, 5);
  MetricsAccumulator acc;
  acc.add(e1, g1);
  acc.add(e2, g2);
  std::vector<double> ge = values(g1), ee = values(e1);
  const auto g2v = values(g2), e2v = values(e2);
  ge.insert(ge.end(), g2v.begin(), g2v.end());
  ee.insert(ee.end(), e2v.begin(), e2v.end());
  check_close(acc.report(), oracle::metrics(ee, ge), 1e-12);
}

TEST_CASE("report serialization") {
  Rng rng(6);
  const MetricsReport r =
      compute_metrics(oracle::random_tensor({20}, rng, 1, 5), oracle::random_tensor({20}, rng, 1, 5));
  CHECK(parse_report_csv(serialize_report(r, ReportFormat::csv_row)) == MetricsReport{r.rel, r.sq_rel, r.log10, r.rms,
                                                                                       r.rms_log, r.delta1, r.delta2,
                                                                                       r.delta3, r.n_pixels, 0});
  const std::string table = serialize_report(r, ReportFormat::human_table);
  const auto pos = [&](const char* s) { return table.find(s); };
  CHECK(pos("rel") < pos("log10"));
  CHECK(pos("log10") < pos("rms"));
  CHECK(pos("rms") < pos("δ<1.25 "));
  CHECK(pos("δ<1.25 ") < pos("δ<1.25²"));
  CHECK(pos("δ<1.25²") < pos("δ<1.25³"));
  CHECK(pos("↓") != std::string::npos);
  CHECK(pos("↑") != std::string::npos);
  CHECK_THROWS_AS(parse_report_csv("1,2,3"), InvalidArgument);
}

TEST_CASE("format_double round-trips") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double v = (uniform01(rng) - 0.5) * std::pow(10.0, static_cast<double>(uniform_index(rng, 20)) - 10);
    CHECK(std::stod(format_double(v)) == v);
  }
}

}
