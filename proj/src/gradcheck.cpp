#include "advdepth/gradcheck.hpp"

#include "advdepth/losses.hpp"
#include "advdepth/ops.hpp"
#include "advdepth/spectral_norm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

namespace advdepth {

namespace {

Tensord rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensord t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform01(rng);
  return t;
}

struct Eval {
  double value;
  std::uint64_t kinks;
};

Eval evaluate(GradCase& c) {
  Graph<double> g;
  g.set_track_kinks(true);
  std::vector<Var<double>> leaves;
  for (const auto& t : c.inputs) leaves.push_back(g.input(t, false));
  const Var<double> l = c.loss(g, leaves);
  return {l.value()[0], g.kink_signature()};
}

std::vector<Index> pick_coords(Rng& rng, Index n, Index max_coords) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_coords) return idx;
  for (Index i = 0; i < max_coords; ++i)
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i))))]);
  idx.resize(static_cast<std::size_t>(max_coords));
  return idx;
}

}  // namespace

CaseError check_case(GradCase& c, const GradCheckOptions& opts, Rng& rng, bool inject_fault) {
  // Analytic pass.
  std::vector<Tensord> analytic;
  std::uint64_t base_kinks = 0;
  {
    Graph<double> g;
    g.set_track_kinks(true);
    std::vector<Var<double>> leaves;
    for (const auto& t : c.inputs) leaves.push_back(g.input(t, true));
    for (auto* p : c.params) p->zero_grad();
    const Var<double> l = c.loss(g, leaves);
    if (l.value().size() != 1) throw InvalidArgument("gradient check loss must be scalar");
    base_kinks = g.kink_signature();
    g.backward(l);
    for (const auto& v : leaves) analytic.push_back(g.grad(v));
    for (auto* p : c.params) analytic.push_back(p->grad);
  }
  if (inject_fault && !analytic.empty()) {
    analytic.front().array() *= 1.01;
    analytic.front()[0] += 1e-3;
  }
  CaseError err;
  const double h = opts.step;
  for (std::size_t ti = 0; ti < analytic.size(); ++ti) {
    Tensord& target = ti < c.inputs.size() ? c.inputs[ti] : c.params[ti - c.inputs.size()]->value;
    std::vector<double> a, n;
    for (Index j : pick_coords(rng, target.size(), opts.max_coords)) {
      const double orig = target[j];
      target[j] = orig + h;
      const Eval plus = evaluate(c);
      target[j] = orig - h;
      const Eval minus = evaluate(c);
      target[j] = orig;
      if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
        ++err.skipped;
        continue;
      }
      a.push_back(analytic[ti][j]);
      n.push_back((plus.value - minus.value) / (2 * h));
      ++err.coords;
    }
    if (a.empty()) continue;
    double diff = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      diff += (a[k] - n[k]) * (a[k] - n[k]);
      na += a[k] * a[k];
      nn += n[k] * n[k];
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    err.max_error = std::max(err.max_error, rel);
  }
  return err;
}

SuperpixelGraph random_crf_graph(Rng& rng, int g, Index height, Index width) {
  if (g < 1 || g > height * width) throw InvalidArgument("random graph needs 1 <= g <= h*w");
  std::vector<Index> seeds = pick_coords(rng, height * width, g);
  std::vector<int> labels(static_cast<std::size_t>(height * width));
  for (Index p = 0; p < height * width; ++p) {
    Index best = std::numeric_limits<Index>::max();
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const Index d = std::abs(p / width - seeds[k] / width) + std::abs(p % width - seeds[k] % width);
      if (d < best) {
        best = d;
        labels[static_cast<std::size_t>(p)] = static_cast<int>(k);
      }
    }
  }
  SuperpixelGraph graph = graph_from_labels(labels, height, width);
  for (auto& s : graph.similarity)
    for (double& v : s) v = 0.05 + 0.95 * uniform01(rng);
  for (int i = 0; i < graph.size(); ++i) graph.h[i] = 2 * uniform01(rng) - 1;
  for (int k = 0; k < kSimilarityKinds; ++k) graph.beta[k] = 2 * uniform01(rng);
  return graph;
}

Eigen::VectorXd crf_map_ascent(const SuperpixelGraph& graph, double tol, int max_iter) {
  // dE/dy = -2 (y - h) - 2 L y. Step 1 / (2 lambda_max) with a Gershgorin
  // bound on lambda_max(A).
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(graph.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const double w = graph.edge_weight(e, graph.beta);
    degree[graph.edges[e].first] += w;
    degree[graph.edges[e].second] += w;
  }
  const double lam_max = 1.0 + 2.0 * (degree.size() ? degree.maxCoeff() : 0.0);
  const double eta = 1.0 / (2.0 * lam_max);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(graph.size());
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd grad = -2.0 * (y - graph.h);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto [i, j] = graph.edges[e];
      const double d = 2.0 * graph.edge_weight(e, graph.beta) * (y[i] - y[j]);
      grad[i] -= d;
      grad[j] += d;
    }
    y += eta * grad;
    if (grad.norm() < tol) break;
  }
  return y;
}

namespace {

using Loss = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

/// Scalarizes a tensor output against a fixed random weight.
Var<double> project(Var<double> out, const Tensord& w) { return dot(out, w); }

struct Check {
  using Run = std::function<CaseError(Rng&, const GradCheckOptions&, bool)>;
  Check(std::string n, GradScope s, Run r, std::optional<double> tol = std::nullopt)
      : name(std::move(n)), scope(s), run(std::move(r)), tolerance(tol) {}

  std::string name;
  GradScope scope;
  Run run;  // one seed
  std::optional<double> tolerance;  // overrides the relative-error tolerance
};

CaseError simple(Rng& rng, const GradCheckOptions& o, bool fault, std::vector<Tensord> inputs, Loss loss,
                 std::vector<Parameter<double>*> params = {}) {
  GradCase c{std::move(inputs), std::move(params), std::move(loss)};
  return check_case(c, o, rng, fault);
}

/// Elementwise op check: inputs of `shape`, output projected on a random weight.
Check unary_op(std::string name, Shape shape, std::function<Var<double>(Var<double>)> op, double lo = -1, double hi = 1) {
  return {name, GradScope::primitives, [=](Rng& rng, const GradCheckOptions& o, bool fault) {
            Tensord x = rand_tensor(rng, shape, lo, hi);
            Graph<double> probe;
            const Tensord w = rand_tensor(rng, op(probe.constant(x)).shape());
            return simple(rng, o, fault, {x}, [=](Graph<double>&, const std::vector<Var<double>>& v) { return project(op(v[0]), w); });
          }};
}

Check binary_op(std::string name, Shape sa, Shape sb, std::function<Var<double>(Var<double>, Var<double>)> op,
                double lo = -1, double hi = 1) {
  return {name, GradScope::primitives, [=](Rng& rng, const GradCheckOptions& o, bool fault) {
            Tensord a = rand_tensor(rng, sa, lo, hi), b = rand_tensor(rng, sb, lo, hi);
            Graph<double> probe;
            const Tensord w = rand_tensor(rng, op(probe.constant(a), probe.constant(b)).shape());
            return simple(rng, o, fault, {a, b},
                          [=](Graph<double>&, const std::vector<Var<double>>& v) { return project(op(v[0], v[1]), w); });
          }};
}

Check conv_check(std::string name, Shape x, Shape w, int stride, int pad, bool transposed) {
  return {name, GradScope::primitives, [=](Rng& rng, const GradCheckOptions& o, bool fault) {
            const Index out_c = transposed ? w[1] : w[0];
            Tensord xi = rand_tensor(rng, x), wi = rand_tensor(rng, w), bi = rand_tensor(rng, {out_c});
            auto op = [=](Var<double> a, Var<double> b, Var<double> c) {
              return transposed ? conv_transpose2d(a, b, c, stride, pad) : conv2d(a, b, c, stride, pad);
            };
            Graph<double> probe;
            const Tensord proj = rand_tensor(rng, op(probe.constant(xi), probe.constant(wi), probe.constant(bi)).shape());
            return simple(rng, o, fault, {xi, wi, bi}, [=](Graph<double>&, const std::vector<Var<double>>& v) {
              return project(op(v[0], v[1], v[2]), proj);
            });
          }};
}

// Small networks used by the network-level suites.
UNetSpec small_unet() {
  UNetSpec s;
  s.input_size = 8;
  s.base_channels = 3;
  s.max_channels = 6;
  return s;
}

PatchDiscriminatorSpec small_disc() {
  PatchDiscriminatorSpec s;
  s.layers = PatchDiscriminatorSpec::default_layers(2);
  return s;
}

CrfOptions small_crf() {
  CrfOptions c;
  c.superpixels = 4;
  c.unary.patch_size = 8;
  c.unary.base_channels = 2;
  c.unary.max_channels = 4;
  return c;
}

std::vector<Check> all_checks() {
  std::vector<Check> v;
  const Shape act{2, 3, 4, 4};
  // Primitives.
  v.push_back(conv_check("conv2d.k3s1p0", {2, 3, 6, 6}, {4, 3, 3, 3}, 1, 0, false));
  v.push_back(conv_check("conv2d.k4s2p1", {2, 3, 8, 8}, {4, 3, 4, 4}, 2, 1, false));
  v.push_back(conv_check("conv2d.unbatched", {3, 5, 5}, {2, 3, 3, 3}, 1, 1, false));
  v.push_back(conv_check("conv_transpose2d.k4s2p1", {2, 3, 3, 3}, {3, 2, 4, 4}, 2, 1, true));
  v.push_back(conv_check("conv_transpose2d.k3s1p0", {1, 2, 4, 4}, {2, 3, 3, 3}, 1, 0, true));
  v.push_back(unary_op("leaky_relu", act, [](Var<double> x) { return leaky_relu(x, 0.2); }));
  v.push_back(unary_op("relu", act, [](Var<double> x) { return relu(x); }));
  v.push_back(unary_op("tanh", act, [](Var<double> x) { return tanh(x); }, -2, 2));
  v.push_back(unary_op("sigmoid", act, [](Var<double> x) { return sigmoid(x); }, -3, 3));
  v.push_back(binary_op("concat_channels", {2, 3, 2, 2}, {2, 1, 2, 2}, [](auto a, auto b) { return concat_channels(a, b); }));
  v.push_back(unary_op("slice_channels", {2, 5, 2, 2}, [](Var<double> x) { return slice_channels(x, 1, 3); }));
  v.push_back({"dropout", GradScope::primitives, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 const std::uint64_t mask_seed = rng();
                 Tensord x = rand_tensor(rng, {2, 3, 4, 4});
                 const Tensord w = rand_tensor(rng, x.shape());
                 return simple(rng, o, fault, {x}, [=](Graph<double>&, const std::vector<Var<double>>& in) {
                   Rng r(mask_seed);  // same mask on every evaluation
                   return project(dropout(in[0], 0.5, Mode::train, r), w);
                 });
               }});
  v.push_back(binary_op("add", act, act, [](auto a, auto b) { return a + b; }));
  v.push_back(binary_op("sub", act, act, [](auto a, auto b) { return a - b; }));
  v.push_back(binary_op("mul", act, act, [](auto a, auto b) { return mul(a, b); }));
  v.push_back(unary_op("scale", act, [](Var<double> x) { return scale(x, 1.7); }));
  v.push_back(unary_op("sum", act, [](Var<double> x) { return sum(x); }));
  v.push_back(unary_op("mean", act, [](Var<double> x) { return mean(x); }));
  v.push_back(unary_op("sum_squares", act, [](Var<double> x) { return sum_squares(x); }));
  v.push_back(unary_op("reshape", act, [](Var<double> x) { return reshape(x, {6, 16}); }));
  v.push_back({"spectral_normalize", GradScope::primitives, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 Tensord w = rand_tensor(rng, {4, 3, 3, 3});
                 SpectralState<double> st;
                 power_iterate(w, st, 20);
                 const Tensord proj = rand_tensor(rng, w.shape());
                 return simple(rng, o, fault, {w}, [=](Graph<double>&, const std::vector<Var<double>>& in) {
                   return project(spectral_normalize(in[0], st), proj);
                 });
               }});
  v.push_back(binary_op("discriminator_loss", {2, 1, 3, 3}, {2, 1, 3, 3},
                        [](auto r, auto f) { return discriminator_loss(r, f); }, 0.05, 0.95));
  v.push_back(unary_op("generator_adversarial_loss.nonsaturating", {2, 1, 3, 3},
                       [](Var<double> f) { return generator_adversarial_loss(f, AdversarialForm::nonsaturating); }, 0.05, 0.95));
  v.push_back(unary_op("generator_adversarial_loss.saturating", {2, 1, 3, 3},
                       [](Var<double> f) { return generator_adversarial_loss(f, AdversarialForm::saturating); }, 0.05, 0.95));
  v.push_back(binary_op("l1_loss", {2, 1, 4, 4}, {2, 1, 4, 4}, [](auto p, auto t) { return l1_loss(p, t); }));
  v.push_back({"combined_generator_loss", GradScope::primitives, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 Tensord score = rand_tensor(rng, {2, 1, 3, 3}, 0.05, 0.95), pred = rand_tensor(rng, {2, 1, 4, 4}),
                         target = rand_tensor(rng, {2, 1, 4, 4});
                 return simple(rng, o, fault, {score, pred, target}, [](Graph<double>&, const std::vector<Var<double>>& in) {
                   return combined_generator_loss(in[0], in[1], in[2], 100.0).total;
                 });
               }});
  v.push_back({"crf_map_batch", GradScope::primitives, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto graphs = std::make_shared<std::vector<SuperpixelGraph>>();
                 Index total = 0;
                 for (int i = 0; i < 2; ++i) {
                   graphs->push_back(random_crf_graph(rng, 2 + static_cast<int>(uniform_index(rng, 5)), 5, 5));
                   total += graphs->back().size();
                 }
                 Tensord h = rand_tensor(rng, {total}), beta = rand_tensor(rng, {kSimilarityKinds}, 0.1, 2.0);
                 const Tensord w = rand_tensor(rng, {total});
                 return simple(rng, o, fault, {h, beta}, [=](Graph<double>&, const std::vector<Var<double>>& in) {
                   return project(crf_map_batch(in[0], in[1], *graphs), w);
                 });
               }});
  v.push_back({"broadcast_to_pixels", GradScope::primitives, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto graphs = std::make_shared<std::vector<SuperpixelGraph>>();
                 Index total = 0;
                 for (int i = 0; i < 2; ++i) {
                   graphs->push_back(random_crf_graph(rng, 3, 4, 4));
                   total += graphs->back().size();
                 }
                 Tensord y = rand_tensor(rng, {total});
                 const Tensord w = rand_tensor(rng, {2, 1, 4, 4});
                 return simple(rng, o, fault, {y}, [=](Graph<double>&, const std::vector<Var<double>>& in) {
                   return project(broadcast_to_pixels(in[0], *graphs), w);
                 });
               }});

  // Networks.
  v.push_back({"unet", GradScope::unet, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto net = std::make_shared<UNet<double>>(small_unet(), rng);
                 const std::uint64_t drop_seed = rng();
                 Tensord x = rand_tensor(rng, {2, 3, 8, 8});
                 const Tensord w = rand_tensor(rng, {2, 1, 8, 8});
                 return simple(
                     rng, o, fault, {x},
                     [=](Graph<double>&, const std::vector<Var<double>>& in) {
                       Rng r(drop_seed);
                       return project(net->forward(in[0], Mode::train, r), w);
                     },
                     net->parameters());
               }});
  v.push_back({"discriminator", GradScope::unet, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto net = std::make_shared<PatchDiscriminator<double>>(small_disc(), rng);
                 Tensord rgb = rand_tensor(rng, {2, 3, 32, 32}), depth = rand_tensor(rng, {2, 1, 32, 32});
                 Graph<double> probe;
                 const Tensord w = rand_tensor(rng, net->forward(probe.constant(rgb), probe.constant(depth)).shape());
                 return simple(
                     rng, o, fault, {rgb, depth},
                     [=](Graph<double>&, const std::vector<Var<double>>& in) { return project(net->forward(in[0], in[1]), w); },
                     net->parameters());
               }});

  // CRF.
  v.push_back({"crf.nll_dh", GradScope::crf, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 const SuperpixelGraph g = random_crf_graph(rng, 2 + static_cast<int>(uniform_index(rng, 5)), 5, 5);
                 Eigen::VectorXd y(g.size());
                 for (int i = 0; i < g.size(); ++i) y[i] = 2 * uniform01(rng) - 1;
                 Eigen::VectorXd a = crf_nll_gradients(g, y).d_h;
                 if (fault) a *= 1.01;
                 Eigen::VectorXd n(g.size());
                 for (int i = 0; i < g.size(); ++i) {
                   Eigen::VectorXd hp = g.h, hm = g.h;
                   hp[i] += o.step;
                   hm[i] -= o.step;
                   n[i] = (crf_nll(g, hp, g.beta, y) - crf_nll(g, hm, g.beta, y)) / (2 * o.step);
                 }
                 return CaseError{(a - n).norm() / std::max({a.norm(), n.norm(), 1e-6}), g.size(), 0};
               }});
  v.push_back({"crf.nll_dbeta", GradScope::crf, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 const SuperpixelGraph g = random_crf_graph(rng, 2 + static_cast<int>(uniform_index(rng, 5)), 5, 5);
                 Eigen::VectorXd y(g.size());
                 for (int i = 0; i < g.size(); ++i) y[i] = 2 * uniform01(rng) - 1;
                 Eigen::VectorXd a = crf_nll_gradients(g, y).d_beta;
                 if (fault) a *= 1.01;
                 Eigen::VectorXd n(kSimilarityKinds);
                 for (int k = 0; k < kSimilarityKinds; ++k) {
                   Eigen::VectorXd bp = g.beta, bm = g.beta;
                   bp[k] += o.step;
                   bm[k] -= o.step;
                   n[k] = (crf_nll(g, g.h, bp, y) - crf_nll(g, g.h, bm, y)) / (2 * o.step);
                 }
                 return CaseError{(a - n).norm() / std::max({a.norm(), n.norm(), 1e-6}), kSimilarityKinds, 0};
               }});
  v.push_back({"crf.nll_batch", GradScope::crf, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto graphs = std::make_shared<std::vector<SuperpixelGraph>>();
                 std::vector<Eigen::VectorXd> ys;
                 Index total = 0;
                 for (int i = 0; i < 3; ++i) {
                   graphs->push_back(random_crf_graph(rng, 2 + static_cast<int>(uniform_index(rng, 5)), 5, 5));
                   total += graphs->back().size();
                   ys.emplace_back(graphs->back().size());
                   for (auto& y : ys.back()) y = 2 * uniform01(rng) - 1;
                 }
                 Tensord h = rand_tensor(rng, {total}), beta = rand_tensor(rng, {kSimilarityKinds}, 0.1, 2.0);
                 return simple(rng, o, fault, {h, beta}, [=](Graph<double>&, const std::vector<Var<double>>& in) {
                   return crf_nll_batch(in[0], in[1], *graphs, ys);
                 });
               }});
  v.push_back({"crf.unary_cnn", GradScope::crf, [](Rng& rng, const GradCheckOptions& o, bool fault) {
                 auto gen = std::make_shared<CrfGenerator<double>>(small_crf(), rng);
                 gen->beta().value = rand_tensor(rng, {kSimilarityKinds}, 0.1, 1.5);
                 const Tensord rgb = rand_tensor(rng, {2, 3, 8, 8});
                 const Tensord depth = rand_tensor(rng, {2, 1, 8, 8});
                 return simple(
                     rng, o, fault, {},
                     [=](Graph<double>& g, const std::vector<Var<double>>&) {
                       auto out = gen->forward(g.constant(rgb));
                       return gen->nll(out, depth) + gen->regularizer(g);
                     },
                     gen->parameters());
               }});
  v.push_back({"crf.map_vs_ascent", GradScope::crf, [](Rng& rng, const GradCheckOptions&, bool fault) {
                 const SuperpixelGraph g = random_crf_graph(rng, 1 + static_cast<int>(uniform_index(rng, 6)), 4, 4);
                 Eigen::VectorXd map = crf_map(g);
                 if (fault) map[0] += 1e-3;
                 const Eigen::VectorXd asc = crf_map_ascent(g);
                 return CaseError{(map - asc).cwiseAbs().maxCoeff(), g.size(), 0};
               },
               1e-6});
  return v;
}

std::uint32_t name_hash(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char ch : s) h = (h ^ ch) * 16777619u;
  return h;
}

bool in_scope(GradScope check, GradScope requested) { return requested == GradScope::all || requested == check; }

}  // namespace

std::vector<std::string> gradcheck_names(GradScope scope) {
  std::vector<std::string> names;
  for (const auto& c : all_checks())
    if (in_scope(c.scope, scope)) names.push_back(c.name);
  return names;
}

std::vector<GradCheckResult> run_gradcheck(GradScope scope, const GradCheckOptions& opts) {
  std::vector<GradCheckResult> out;
  for (const auto& c : all_checks()) {
    if (!in_scope(c.scope, scope)) continue;
    GradCheckResult r;
    r.name = c.name;
    r.tolerance = c.tolerance.value_or(opts.tolerance);
    const bool fault = opts.inject_fault == c.name;
    for (int s = 0; s < opts.seeds; ++s) {
      std::seed_seq seq{static_cast<std::uint32_t>(opts.base_seed), static_cast<std::uint32_t>(s),
                        name_hash(c.name)};
      Rng rng(seq);
      const CaseError e = c.run(rng, opts, fault);
      r.max_error = std::max(r.max_error, e.max_error);
      r.coords += e.coords;
      r.skipped += e.skipped;
      ++r.seeds;
    }
    r.passed = r.max_error < r.tolerance && r.coords > 0;
    out.push_back(r);
  }
  return out;
}

std::string format_gradcheck(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results)
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(44) << r.name << " max_err=" << std::scientific
       << std::setprecision(2) << r.max_error << " coords=" << std::defaultfloat << r.coords << " kink_skips=" << r.skipped
       << " seeds=" << r.seeds << '\n';
  return os.str();
}

}  // namespace advdepth
