#include "advdepth/crf.hpp"

#include "advdepth/image.hpp"
#include "advdepth/ops.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <set>

namespace advdepth {

double SuperpixelGraph::edge_weight(std::size_t e, const Eigen::VectorXd& b) const {
  double w = 0.0;
  for (int k = 0; k < kSimilarityKinds; ++k) w += b[k] * similarity[e][static_cast<std::size_t>(k)];
  return w;
}

SuperpixelGraph graph_from_labels(const std::vector<int>& labels, Index height, Index width) {
  if (static_cast<Index>(labels.size()) != height * width)
    throw DimensionError("labels", "label map size does not match " + std::to_string(height) + "x" + std::to_string(width));
  SuperpixelGraph g;
  g.height = height;
  g.width = width;
  g.labels.resize(labels.size());
  std::vector<std::pair<int, int>> remap;  // sorted (old, new)
  std::vector<int> lookup;
  int min_label = *std::min_element(labels.begin(), labels.end());
  int max_label = *std::max_element(labels.begin(), labels.end());
  if (min_label < 0) throw InvalidArgument("labels must be nonnegative");
  lookup.assign(static_cast<std::size_t>(max_label) + 1, -1);
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int& l = lookup[static_cast<std::size_t>(labels[i])];
    if (l < 0) {
      l = next++;
      g.node_pixels.emplace_back();
    }
    g.labels[i] = l;
    g.node_pixels[static_cast<std::size_t>(l)].push_back(static_cast<Index>(i));
  }
  std::set<std::pair<int, int>> edges;
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) {
      const int a = g.labels[static_cast<std::size_t>(y * width + x)];
      if (x + 1 < width) {
        const int b = g.labels[static_cast<std::size_t>(y * width + x + 1)];
        if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
      }
      if (y + 1 < height) {
        const int b = g.labels[static_cast<std::size_t>((y + 1) * width + x)];
        if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
      }
    }
  g.edges.assign(edges.begin(), edges.end());
  g.similarity.assign(g.edges.size(), {1.0, 1.0});
  g.h = Eigen::VectorXd::Zero(g.size());
  g.beta = Eigen::VectorXd::Zero(kSimilarityKinds);
  return g;
}

namespace {

std::vector<int> grid_labels(Index H, Index W, int g_target) {
  // rows x cols close to g_target with blocks as square as the image allows.
  const double aspect = static_cast<double>(H) / static_cast<double>(W);
  Index rows = std::clamp<Index>(static_cast<Index>(std::lround(std::sqrt(g_target * aspect))), 1, H);
  Index cols = std::clamp<Index>(static_cast<Index>(std::lround(static_cast<double>(g_target) / rows)), 1, W);
  std::vector<int> labels(static_cast<std::size_t>(H * W));
  for (Index y = 0; y < H; ++y) {
    const Index r = y * rows / H;
    for (Index x = 0; x < W; ++x) labels[static_cast<std::size_t>(y * W + x)] = static_cast<int>(r * cols + x * cols / W);
  }
  return labels;
}

template <typename S>
std::vector<int> slic_labels(const Tensor<S>& image, int g_target, const SlicOptions& opt) {
  const Index H = image.dim(1), W = image.dim(2), N = H * W;
  const double step = std::max(1.0, std::sqrt(static_cast<double>(N) / g_target));
  struct Center {
    double y, x, c[3];
  };
  auto px = [&](Index c, Index y, Index x) { return static_cast<double>(image.at(c, y, x)); };
  auto grad = [&](Index y, Index x) {
    if (y < 1 || x < 1 || y + 1 >= H || x + 1 >= W) return std::numeric_limits<double>::infinity();
    double s = 0;
    for (Index c = 0; c < 3; ++c) {
      const double dx = px(c, y, x + 1) - px(c, y, x - 1), dy = px(c, y + 1, x) - px(c, y - 1, x);
      s += dx * dx + dy * dy;
    }
    return s;
  };
  std::vector<Center> centers;
  for (double cy = step / 2; cy < H; cy += step)
    for (double cx = step / 2; cx < W; cx += step) {
      Index by = static_cast<Index>(cy), bx = static_cast<Index>(cx);
      double best = grad(by, bx);
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index yy = static_cast<Index>(cy) + dy, xx = static_cast<Index>(cx) + dx;
          if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
          if (const double gv = grad(yy, xx); gv < best) {
            best = gv;
            by = yy;
            bx = xx;
          }
        }
      centers.push_back({static_cast<double>(by), static_cast<double>(bx), {px(0, by, bx), px(1, by, bx), px(2, by, bx)}});
    }
  std::vector<int> labels(static_cast<std::size_t>(N), -1);
  std::vector<double> dist(static_cast<std::size_t>(N));
  const double m2 = opt.compactness * opt.compactness / (step * step);
  auto distance = [&](const Center& c, Index y, Index x) {
    double dc = 0;
    for (Index ch = 0; ch < 3; ++ch) {
      const double d = px(ch, y, x) - c.c[ch];
      dc += d * d;
    }
    const double ds = (y - c.y) * (y - c.y) + (x - c.x) * (x - c.x);
    return dc + ds * m2;
  };
  for (int it = 0; it < opt.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const Index y0 = std::max<Index>(0, static_cast<Index>(c.y - step)), y1 = std::min<Index>(H, static_cast<Index>(c.y + step) + 1);
      const Index x0 = std::max<Index>(0, static_cast<Index>(c.x - step)), x1 = std::min<Index>(W, static_cast<Index>(c.x + step) + 1);
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) {
          const double d = distance(c, y, x);
          const auto i = static_cast<std::size_t>(y * W + x);
          if (d < dist[i]) {
            dist[i] = d;
            labels[i] = static_cast<int>(k);
          }
        }
    }
    // Pixels outside every window go to the nearest center.
    for (Index i = 0; i < N; ++i) {
      if (labels[static_cast<std::size_t>(i)] >= 0) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k)
        if (const double d = distance(centers[k], i / W, i % W); d < best) {
          best = d;
          labels[static_cast<std::size_t>(i)] = static_cast<int>(k);
        }
    }
    std::vector<Center> acc(centers.size(), Center{0, 0, {0, 0, 0}});
    std::vector<long> count(centers.size(), 0);
    for (Index i = 0; i < N; ++i) {
      const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      acc[k].y += static_cast<double>(i / W);
      acc[k].x += static_cast<double>(i % W);
      for (Index ch = 0; ch < 3; ++ch) acc[k].c[ch] += px(ch, i / W, i % W);
      ++count[k];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0) continue;
      const double n = static_cast<double>(count[k]);
      centers[k] = {acc[k].y / n, acc[k].x / n, {acc[k].c[0] / n, acc[k].c[1] / n, acc[k].c[2] / n}};
    }
  }
  // Connectivity: split clusters into 4-connected components and fold
  // components smaller than a quarter of the nominal size into a neighbour.
  const long min_size = std::max<long>(1, static_cast<long>(N / static_cast<Index>(centers.size()) / 4));
  std::vector<int> out(static_cast<std::size_t>(N), -1);
  int next = 0;
  std::vector<Index> stack, comp;
  const Index dy[4] = {-1, 0, 1, 0}, dx[4] = {0, -1, 0, 1};
  for (Index start = 0; start < N; ++start) {
    if (out[static_cast<std::size_t>(start)] >= 0) continue;
    const int lab = labels[static_cast<std::size_t>(start)];
    int adjacent = -1;
    for (int d = 0; d < 4; ++d) {
      const Index y = start / W + dy[d], x = start % W + dx[d];
      if (y >= 0 && x >= 0 && y < H && x < W && out[static_cast<std::size_t>(y * W + x)] >= 0)
        adjacent = out[static_cast<std::size_t>(y * W + x)];
    }
    comp.clear();
    stack.assign(1, start);
    out[static_cast<std::size_t>(start)] = next;
    while (!stack.empty()) {
      const Index i = stack.back();
      stack.pop_back();
      comp.push_back(i);
      for (int d = 0; d < 4; ++d) {
        const Index y = i / W + dy[d], x = i % W + dx[d];
        if (y < 0 || x < 0 || y >= H || x >= W) continue;
        const auto j = static_cast<std::size_t>(y * W + x);
        if (out[j] < 0 && labels[j] == lab) {
          out[j] = next;
          stack.push_back(static_cast<Index>(j));
        }
      }
    }
    if (static_cast<long>(comp.size()) < min_size && adjacent >= 0) {
      for (Index i : comp) out[static_cast<std::size_t>(i)] = adjacent;
    } else {
      ++next;
    }
  }
  return out;
}

template <typename S>
void check_rgb(const Tensor<S>& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("image", "expected [3,H,W], got " + shape_str(image.shape()));
}

Eigen::MatrixXd laplacian_of(const SuperpixelGraph& g, const Eigen::VectorXd& beta) {
  const int n = g.size();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    const double w = g.edge_weight(e, beta);
    L(i, i) += w;
    L(j, j) += w;
    L(i, j) -= w;
    L(j, i) -= w;
  }
  return L;
}

void check_lengths(const SuperpixelGraph& g, const Eigen::VectorXd& h, const Eigen::VectorXd& beta) {
  if (h.size() != g.size())
    throw DimensionError("nodes", "h has " + std::to_string(h.size()) + " entries for " + std::to_string(g.size()) + " nodes");
  if (beta.size() != kSimilarityKinds)
    throw DimensionError("beta", "expected " + std::to_string(kSimilarityKinds) + " weights, got " + std::to_string(beta.size()));
  if (g.similarity.size() != g.edges.size()) throw DimensionError("similarity", "one similarity vector per edge required");
}

Eigen::LLT<Eigen::MatrixXd> factor(const SuperpixelGraph& g, const Eigen::VectorXd& beta) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision_matrix(g, beta));
  if (llt.info() != Eigen::Success)
    throw NumericError("CRF precision matrix is not positive definite (negative beta or invalid similarities)");
  return llt;
}

/// Pairwise quadratic form sum_edges s_e (a_i - a_j)(b_i - b_j) for kernel k.
double edge_form(const SuperpixelGraph& g, int k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    s += g.similarity[e][static_cast<std::size_t>(k)] * (a[i] - a[j]) * (b[i] - b[j]);
  }
  return s;
}

}  // namespace

template <typename S>
SuperpixelGraph segment_superpixels(const Tensor<S>& image, int g_target, SegmentationMethod method,
                                    const SlicOptions& slic) {
  check_rgb(image);
  const Index H = image.dim(1), W = image.dim(2);
  if (g_target < 1) throw ConfigError("superpixel target must be >= 1");
  if (g_target > H * W) throw ConfigError("superpixel target exceeds pixel count");
  const std::vector<int> labels = method == SegmentationMethod::grid ? grid_labels(H, W, g_target)
                                                                      : slic_labels(image, g_target, slic);
  return graph_from_labels(labels, H, W);
}

template <typename S>
void compute_similarity(const Tensor<S>& image, SuperpixelGraph& graph, const SimilarityOptions& opts) {
  check_rgb(image);
  if (image.dim(1) != graph.height || image.dim(2) != graph.width)
    throw DimensionError("image", "graph was built for a different image size");
  if (opts.histogram_bins < 1) throw ConfigError("histogram needs at least one bin");
  if (!(opts.sigma_intensity > 0 && opts.sigma_histogram > 0)) throw ConfigError("similarity bandwidths must be positive");
  const Tensor<S> gray = to_gray(image);
  const int n = graph.size();
  const int bins = opts.histogram_bins;
  Eigen::VectorXd mean_int(n);
  Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(n, bins);
  for (int i = 0; i < n; ++i) {
    const auto& pix = graph.node_pixels[static_cast<std::size_t>(i)];
    if (pix.empty()) throw InvalidArgument("superpixel " + std::to_string(i) + " has no pixels");
    double s = 0;
    for (Index p : pix) {
      const double v = std::clamp(static_cast<double>(gray[p]), 0.0, 1.0);
      s += v;
      hist(i, std::min(bins - 1, static_cast<int>(v * bins))) += 1.0;
    }
    mean_int[i] = s / static_cast<double>(pix.size());
    hist.row(i) /= static_cast<double>(pix.size());
  }
  graph.similarity.resize(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [i, j] = graph.edges[e];
    graph.similarity[e][0] = std::exp(-std::abs(mean_int[i] - mean_int[j]) / opts.sigma_intensity);
    graph.similarity[e][1] = std::exp(-(hist.row(i) - hist.row(j)).norm() / opts.sigma_histogram);
  }
}

Eigen::MatrixXd similarity_laplacian(const SuperpixelGraph& graph, int kind) {
  if (kind < 0 || kind >= kSimilarityKinds) throw InvalidArgument("similarity kind out of range");
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(kSimilarityKinds);
  unit[kind] = 1.0;
  return laplacian_of(graph, unit);
}

Eigen::MatrixXd precision_matrix(const SuperpixelGraph& graph, const Eigen::VectorXd& beta) {
  if (beta.size() != kSimilarityKinds) throw DimensionError("beta", "wrong number of pairwise weights");
  return Eigen::MatrixXd::Identity(graph.size(), graph.size()) + laplacian_of(graph, beta);
}

double crf_energy(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
                  const Eigen::VectorXd& y) {
  check_lengths(graph, h, beta);
  if (y.size() != graph.size()) throw DimensionError("y", "depth vector length does not match node count");
  double e = -(y - h).squaredNorm();
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const auto [i, j] = graph.edges[k];
    const double d = y[i] - y[j];
    e -= graph.edge_weight(k, beta) * d * d;
  }
  return e;
}

double crf_energy(const SuperpixelGraph& graph, const Eigen::VectorXd& y) {
  return crf_energy(graph, graph.h, graph.beta, y);
}

Eigen::VectorXd crf_map(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta) {
  check_lengths(graph, h, beta);
  return factor(graph, beta).solve(h);
}

Eigen::VectorXd crf_map(const SuperpixelGraph& graph) { return crf_map(graph, graph.h, graph.beta); }

double crf_nll(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
               const Eigen::VectorXd& y_true) {
  check_lengths(graph, h, beta);
  if (y_true.size() != graph.size()) throw DimensionError("y", "depth vector length does not match node count");
  const auto llt = factor(graph, beta);
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double g = static_cast<double>(graph.size());
  const double log_z = 0.5 * g * std::log(std::numbers::pi) - 0.5 * logdet + h.dot(llt.solve(h)) - h.squaredNorm();
  return -crf_energy(graph, h, beta, y_true) + log_z;
}

double crf_nll(const SuperpixelGraph& graph, const Eigen::VectorXd& y_true) {
  return crf_nll(graph, graph.h, graph.beta, y_true);
}

CrfGradients crf_nll_gradients(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& y_true) {
  check_lengths(graph, h, beta);
  if (y_true.size() != graph.size()) throw DimensionError("y", "depth vector length does not match node count");
  const auto llt = factor(graph, beta);
  const int n = graph.size();
  const Eigen::VectorXd a_h = llt.solve(h);
  const Eigen::MatrixXd a_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  CrfGradients out;
  out.d_h = 2.0 * (h - y_true) + 2.0 * a_h - 2.0 * h;
  out.d_beta = Eigen::VectorXd::Zero(kSimilarityKinds);
  for (int k = 0; k < kSimilarityKinds; ++k) {
    double trace = 0.0;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto [i, j] = graph.edges[e];
      trace += graph.similarity[e][static_cast<std::size_t>(k)] * (a_inv(i, i) + a_inv(j, j) - 2.0 * a_inv(i, j));
    }
    out.d_beta[k] = edge_form(graph, k, y_true, y_true) - 0.5 * trace - edge_form(graph, k, a_h, a_h);
  }
  return out;
}

CrfGradients crf_nll_gradients(const SuperpixelGraph& graph, const Eigen::VectorXd& y_true) {
  return crf_nll_gradients(graph, graph.h, graph.beta, y_true);
}

double crf_regularizer(double gamma_sq_norm, const Eigen::VectorXd& beta, double lambda_gamma, double lambda_beta) {
  return 0.5 * lambda_gamma * gamma_sq_norm + 0.5 * lambda_beta * beta.squaredNorm();
}

Eigen::VectorXd node_means(const SuperpixelGraph& graph, const double* dense) {
  Eigen::VectorXd m(graph.size());
  for (int i = 0; i < graph.size(); ++i) {
    const auto& pix = graph.node_pixels[static_cast<std::size_t>(i)];
    double s = 0;
    for (Index p : pix) s += dense[p];
    m[i] = s / static_cast<double>(pix.size());
  }
  return m;
}

namespace {

template <typename S>
Eigen::VectorXd to_vec(const Tensor<S>& t, Index offset, Index n) {
  return t.array().segment(offset, n).template cast<double>().matrix();
}

template <typename S>
void check_batch(const Var<S>& h_all, const Var<S>& beta, const std::vector<SuperpixelGraph>& graphs) {
  Index total = 0;
  for (const auto& g : graphs) total += g.size();
  if (h_all.value().size() != total)
    throw DimensionError("nodes", "stacked h has " + std::to_string(h_all.value().size()) + " entries for " +
                                      std::to_string(total) + " nodes");
  if (beta.value().size() != kSimilarityKinds) throw DimensionError("beta", "wrong number of pairwise weights");
}

}  // namespace

template <typename S>
Var<S> crf_map_batch(Var<S> h_all, Var<S> beta, const std::vector<SuperpixelGraph>& graphs) {
  check_batch(h_all, beta, graphs);
  const Eigen::VectorXd b = to_vec(beta.value(), 0, kSimilarityKinds);
  Tensor<S> y(h_all.shape());
  Index off = 0;
  for (const auto& g : graphs) {
    const Eigen::VectorXd ys = crf_map(g, to_vec(h_all.value(), off, g.size()), b);
    y.array().segment(off, g.size()) = ys.array().template cast<S>();
    off += g.size();
  }
  return h_all.graph->record(std::move(y), {h_all, beta},
                             [h_all, beta, gs = std::make_shared<const std::vector<SuperpixelGraph>>(graphs), b](const Tensor<S>& gout, Graph<S>& gr, const Tensor<S>& out) {
                               Tensor<S> gh(h_all.shape());
                               Tensor<S> gb(beta.shape());
                               Index o = 0;
                               for (const auto& g : *gs) {
                                 const auto llt = factor(g, b);
                                 // y = A^{-1} h, so dh = A^{-1} gy and dbeta_k = -(A^{-1} gy)^T L_k y.
                                 const Eigen::VectorXd a = llt.solve(to_vec(gout, o, g.size()));
                                 const Eigen::VectorXd ys = to_vec(out, o, g.size());
                                 gh.array().segment(o, g.size()) = a.array().template cast<S>();
                                 for (int k = 0; k < kSimilarityKinds; ++k)
                                   gb[k] += static_cast<S>(-edge_form(g, k, a, ys));
                                 o += g.size();
                               }
                               gr.accumulate(h_all, std::move(gh));
                               gr.accumulate(beta, std::move(gb));
                             });
}

template <typename S>
Var<S> crf_nll_batch(Var<S> h_all, Var<S> beta, const std::vector<SuperpixelGraph>& graphs,
                     const std::vector<Eigen::VectorXd>& y_true) {
  check_batch(h_all, beta, graphs);
  if (y_true.size() != graphs.size()) throw DimensionError("batch", "one ground-truth vector per graph required");
  const Eigen::VectorXd b = to_vec(beta.value(), 0, kSimilarityKinds);
  const double inv_n = 1.0 / static_cast<double>(graphs.size());
  double total = 0.0;
  Index off = 0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    total += crf_nll(graphs[i], to_vec(h_all.value(), off, graphs[i].size()), b, y_true[i]);
    off += graphs[i].size();
  }
  return h_all.graph->record(
      Tensor<S>::constant({1}, static_cast<S>(total * inv_n)), {h_all, beta},
      [h_all, beta, gs = std::make_shared<const std::vector<SuperpixelGraph>>(graphs), y_true, b, inv_n](const Tensor<S>& gout, Graph<S>& gr, const Tensor<S>&) {
        const double go = static_cast<double>(gout[0]) * inv_n;
        Tensor<S> gh(h_all.shape());
        Tensor<S> gb(beta.shape());
        Index o = 0;
        for (std::size_t i = 0; i < gs->size(); ++i) {
          const auto grads = crf_nll_gradients((*gs)[i], to_vec(h_all.value(), o, (*gs)[i].size()), b, y_true[i]);
          gh.array().segment(o, (*gs)[i].size()) = (go * grads.d_h.array()).template cast<S>();
          for (int k = 0; k < kSimilarityKinds; ++k) gb[k] += static_cast<S>(go * grads.d_beta[k]);
          o += (*gs)[i].size();
        }
        gr.accumulate(h_all, std::move(gh));
        gr.accumulate(beta, std::move(gb));
      });
}

template <typename S>
Var<S> broadcast_to_pixels(Var<S> y_all, const std::vector<SuperpixelGraph>& graphs) {
  if (graphs.empty()) throw InvalidArgument("broadcast needs at least one graph");
  const Index H = graphs.front().height, W = graphs.front().width;
  Index total = 0;
  for (const auto& g : graphs) {
    if (g.height != H || g.width != W) throw DimensionError("image", "graphs in a batch must share one image size");
    total += g.size();
  }
  if (y_all.value().size() != total) throw DimensionError("nodes", "stacked values do not match node count");
  Tensor<S> dense({static_cast<Index>(graphs.size()), 1, H, W});
  Index off = 0;
  for (std::size_t n = 0; n < graphs.size(); ++n) {
    const auto& lab = graphs[n].labels;
    for (Index p = 0; p < H * W; ++p)
      dense[static_cast<Index>(n) * H * W + p] = y_all.value()[off + lab[static_cast<std::size_t>(p)]];
    off += graphs[n].size();
  }
  return y_all.graph->record(std::move(dense), {y_all},
                             [y_all, gs = std::make_shared<const std::vector<SuperpixelGraph>>(graphs), H, W](const Tensor<S>& gout, Graph<S>& gr, const Tensor<S>&) {
                               Tensor<S> gy(y_all.shape());
                               Index o = 0;
                               for (std::size_t n = 0; n < gs->size(); ++n) {
                                 const auto& lab = (*gs)[n].labels;
                                 for (Index p = 0; p < H * W; ++p)
                                   gy[o + lab[static_cast<std::size_t>(p)]] += gout[static_cast<Index>(n) * H * W + p];
                                 o += (*gs)[n].size();
                               }
                               gr.accumulate(y_all, std::move(gy));
                             });
}

template <typename S>
CrfGenerator<S>::CrfGenerator(const CrfOptions& opts, Rng& rng)
    : opts_(opts),
      unary_(opts.unary, rng),
      beta_("crf.beta", Tensor<S>::constant({kSimilarityKinds}, static_cast<S>(opts.beta_init))) {
  if (opts_.superpixels < 1) throw ConfigError("superpixel count must be >= 1");
  if (opts_.beta_init < 0) throw ConfigError("initial beta must be nonnegative");
}

template <typename S>
Tensor<S> CrfGenerator<S>::extract_patches(const Tensor<S>& rgb, const SuperpixelGraph& graph) const {
  const Index P = opts_.unary.patch_size;
  const Index W = graph.width;
  Tensor<S> out({graph.size(), 3, P, P});
  const Index patch = 3 * P * P;
  for (int i = 0; i < graph.size(); ++i) {
    Index y0 = graph.height, y1 = -1, x0 = W, x1 = -1;
    for (Index p : graph.node_pixels[static_cast<std::size_t>(i)]) {
      y0 = std::min(y0, p / W);
      y1 = std::max(y1, p / W);
      x0 = std::min(x0, p % W);
      x1 = std::max(x1, p % W);
    }
    const Tensor<S> crop = crop_resize_bilinear(rgb, y0, x0, y1 - y0 + 1, x1 - x0 + 1, P, P);
    out.array().segment(i * patch, patch) = crop.array();
  }
  return out;
}

template <typename S>
typename CrfGenerator<S>::Output CrfGenerator<S>::forward(Var<S> rgb) {
  const Shape s = rgb.shape();
  const bool batched = s.size() == 4;
  if (!batched && s.size() != 3) throw DimensionError("rank", "CRF generator expects [3,H,W] or [N,3,H,W]");
  const Tensor<S> images = batched ? rgb.value() : rgb.value().reshaped({1, s[0], s[1], s[2]});
  const Index n = images.dim(0);
  Output out;
  std::vector<Tensor<S>> patches;
  Index total = 0;
  for (Index i = 0; i < n; ++i) {
    const Tensor<S> img = batch_item(images, i);
    const Tensor<S> unit(img.shape(), (img.array() + S(1)) * S(0.5));
    SuperpixelGraph g = segment_superpixels(unit, opts_.superpixels, opts_.method, opts_.slic);
    compute_similarity(unit, g, opts_.similarity);
    patches.push_back(extract_patches(img, g));
    total += g.size();
    out.graphs.push_back(std::move(g));
  }
  const Index P = opts_.unary.patch_size;
  Tensor<S> stacked({total, 3, P, P});
  Index off = 0;
  for (const auto& p : patches) {
    stacked.array().segment(off, p.size()) = p.array();
    off += p.size();
  }
  Graph<S>& gr = *rgb.graph;
  out.h = unary_.forward(gr.constant(std::move(stacked)));
  out.beta = gr.parameter(beta_);
  for (auto& g : out.graphs) g.beta = out.beta.value().array().template cast<double>().matrix();
  out.y_star = crf_map_batch(out.h, out.beta, out.graphs);
  Var<S> dense = broadcast_to_pixels(out.y_star, out.graphs);
  if (!batched) dense = reshape(dense, {1, s[1], s[2]});
  out.dense = dense;
  return out;
}

template <typename S>
Var<S> CrfGenerator<S>::nll(const Output& out, const Tensor<S>& depth_true) {
  const Index n = static_cast<Index>(out.graphs.size());
  const Index H = out.graphs.front().height, W = out.graphs.front().width;
  if (depth_true.size() != n * H * W)
    throw DimensionError("batch", "ground truth " + shape_str(depth_true.shape()) + " does not match the forward batch");
  std::vector<Eigen::VectorXd> y;
  const Eigen::VectorXd dense = depth_true.array().template cast<double>().matrix();
  for (Index i = 0; i < n; ++i) y.push_back(node_means(out.graphs[static_cast<std::size_t>(i)], dense.data() + i * H * W));
  return crf_nll_batch(out.h, out.beta, out.graphs, y);
}

template <typename S>
Var<S> CrfGenerator<S>::regularizer(Graph<S>& g) {
  Var<S> gamma_sq = g.constant(Tensor<S>::zeros({1}));
  for (auto* p : unary_.parameters()) gamma_sq = gamma_sq + sum_squares(g.parameter(*p));
  return scale(gamma_sq, static_cast<S>(0.5 * opts_.lambda_gamma)) +
         scale(sum_squares(g.parameter(beta_)), static_cast<S>(0.5 * opts_.lambda_beta));
}

template <typename S>
void CrfGenerator<S>::project_beta() {
  beta_.value.array() = beta_.value.array().max(S(0));
}

template <typename S>
std::vector<Parameter<S>*> CrfGenerator<S>::parameters() {
  auto p = unary_.parameters();
  p.push_back(&beta_);
  return p;
}

template <typename S>
std::vector<ConvLayer<S>*> CrfGenerator<S>::conv_layers() {
  return unary_.conv_layers();
}

#define ADVDEPTH_INSTANTIATE_CRF(S)                                                                              \
  template SuperpixelGraph segment_superpixels(const Tensor<S>&, int, SegmentationMethod, const SlicOptions&);  \
  template void compute_similarity(const Tensor<S>&, SuperpixelGraph&, const SimilarityOptions&);               \
  template Var<S> crf_map_batch(Var<S>, Var<S>, const std::vector<SuperpixelGraph>&);                           \
  template Var<S> crf_nll_batch(Var<S>, Var<S>, const std::vector<SuperpixelGraph>&,                            \
                                const std::vector<Eigen::VectorXd>&);                                           \
  template Var<S> broadcast_to_pixels(Var<S>, const std::vector<SuperpixelGraph>&);                             \
  template class CrfGenerator<S>;

ADVDEPTH_INSTANTIATE_CRF(float)
ADVDEPTH_INSTANTIATE_CRF(double)

}  // namespace advdepth
