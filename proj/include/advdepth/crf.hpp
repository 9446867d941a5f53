#pragma once

#include "advdepth/autograd.hpp"
#include "advdepth/nets.hpp"

#include <Eigen/Core>

#include <array>
#include <utility>
#include <vector>

namespace advdepth {

/// Number of pairwise similarity kernels: mean intensity and grayscale histogram.
inline constexpr int kSimilarityKinds = 2;

/// Superpixel CRF substrate. Nodes partition the image; edges join nodes that
/// touch under 4-connectivity and carry one similarity per kernel.
struct SuperpixelGraph {
  Index height = 0;
  Index width = 0;
  std::vector<int> labels;                     // node id per pixel, row-major
  std::vector<std::vector<Index>> node_pixels;  // pixel indices per node
  std::vector<std::pair<int, int>> edges;       // unordered, first < second
  std::vector<std::array<double, kSimilarityKinds>> similarity;  // per edge, in (0, 1]
  Eigen::VectorXd h;     // unary regression per node
  Eigen::VectorXd beta;  // nonnegative pairwise weights, one per kernel

  int size() const noexcept { return static_cast<int>(node_pixels.size()); }
  /// w_ij = sum_k beta_k S^k_ij for edge `e` under weights `b`.
  double edge_weight(std::size_t e, const Eigen::VectorXd& b) const;
};

enum class SegmentationMethod { grid, slic };

struct SlicOptions {
  /// Spatial weight relative to colour distance (colours in [0,1]).
  double compactness = 0.15;
  int iterations = 10;
};

/// Builds node sets and 4-connectivity edges from a per-pixel label map
/// (labels need not be contiguous; they are renumbered in scan order).
SuperpixelGraph graph_from_labels(const std::vector<int>& labels, Index height, Index width);

/// Partition of a [3,H,W] image (values in [0,1]). `grid` splits into
/// near-equal blocks; `slic` clusters colour+position and enforces
/// connectivity.
template <typename Scalar>
SuperpixelGraph segment_superpixels(const Tensor<Scalar>& image, int g_target, SegmentationMethod method,
                                    const SlicOptions& slic = {});

struct SimilarityOptions {
  double sigma_intensity = 0.1;
  double sigma_histogram = 0.1;
  int histogram_bins = 10;
};

/// Fills graph.similarity: S1 = exp(-|mean_i - mean_j| / sigma1) on mean
/// grayscale intensity and S2 = exp(-||hist_i - hist_j||_2 / sigma2) on
/// normalized grayscale histograms. Image values in [0,1].
template <typename Scalar>
void compute_similarity(const Tensor<Scalar>& image, SuperpixelGraph& graph, const SimilarityOptions& opts = {});

/// Laplacian of the edge weights S^k (the derivative of A w.r.t. beta_k).
Eigen::MatrixXd similarity_laplacian(const SuperpixelGraph& graph, int kind);

/// A = I + L, with L the Laplacian of w_ij = sum_k beta_k S^k_ij.
Eigen::MatrixXd precision_matrix(const SuperpixelGraph& graph, const Eigen::VectorXd& beta);

/// E = -sum_i (y_i - h_i)^2 - sum_edges w_ij (y_i - y_j)^2, using graph.h and graph.beta.
double crf_energy(const SuperpixelGraph& graph, const Eigen::VectorXd& y);
double crf_energy(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
                  const Eigen::VectorXd& y);

/// MAP estimate y* = A^{-1} h by Cholesky. Throws NumericError when A is not
/// positive definite (negative beta or invalid similarities).
Eigen::VectorXd crf_map(const SuperpixelGraph& graph);
Eigen::VectorXd crf_map(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta);

/// Negative log-likelihood -E(y) + log Z with
/// log Z = (g/2) log pi - 1/2 log|A| + h^T A^{-1} h - h^T h.
double crf_nll(const SuperpixelGraph& graph, const Eigen::VectorXd& y_true);
double crf_nll(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
               const Eigen::VectorXd& y_true);

struct CrfGradients {
  Eigen::VectorXd d_h;
  Eigen::VectorXd d_beta;
};

/// dNLL/dh = 2(h - y) + 2 A^{-1} h - 2h;
/// dNLL/dbeta_k = y^T L_k y - 1/2 tr(A^{-1} L_k) - h^T A^{-1} L_k A^{-1} h.
CrfGradients crf_nll_gradients(const SuperpixelGraph& graph, const Eigen::VectorXd& y_true);
CrfGradients crf_nll_gradients(const SuperpixelGraph& graph, const Eigen::VectorXd& h, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& y_true);

/// (lambda_gamma / 2) ||gamma||^2 + (lambda_beta / 2) ||beta||^2.
double crf_regularizer(double gamma_sq_norm, const Eigen::VectorXd& beta, double lambda_gamma, double lambda_beta);

/// Mean of `dense` (length H*W) over each node's pixels.
Eigen::VectorXd node_means(const SuperpixelGraph& graph, const double* dense);

// Differentiable forms over a batch of graphs. h_all stacks the node values
// of every graph in order; beta has kSimilarityKinds entries.

template <typename Scalar>
Var<Scalar> crf_map_batch(Var<Scalar> h_all, Var<Scalar> beta, const std::vector<SuperpixelGraph>& graphs);

/// Mean per-image NLL.
template <typename Scalar>
Var<Scalar> crf_nll_batch(Var<Scalar> h_all, Var<Scalar> beta, const std::vector<SuperpixelGraph>& graphs,
                          const std::vector<Eigen::VectorXd>& y_true);

/// Paints node values onto pixels: [N,1,H,W].
template <typename Scalar>
Var<Scalar> broadcast_to_pixels(Var<Scalar> y_all, const std::vector<SuperpixelGraph>& graphs);

struct CrfOptions {
  int superpixels = 16;
  SegmentationMethod method = SegmentationMethod::grid;
  SlicOptions slic;
  SimilarityOptions similarity;
  UnaryCnnSpec unary;
  double beta_init = 0.5;
  double lambda_gamma = 1e-3;
  double lambda_beta = 1e-3;
};

/// CNN-CRF generator: per-superpixel patches -> unary CNN -> h, Gaussian CRF
/// MAP -> y*, painted back onto the superpixels as a dense depth map.
template <typename Scalar>
class CrfGenerator : public Network<Scalar> {
 public:
  struct Output {
    Var<Scalar> dense;  // [N,1,H,W] (unbatched input gives [1,H,W])
    Var<Scalar> h;      // stacked unary values
    Var<Scalar> y_star;
    Var<Scalar> beta;
    std::vector<SuperpixelGraph> graphs;
  };

  CrfGenerator(const CrfOptions& opts, Rng& rng);

  /// rgb in [-1,1], [3,H,W] or [N,3,H,W].
  Output forward(Var<Scalar> rgb);
  /// Mean per-image NLL of ground-truth depth (normalized, [N,1,H,W]) under
  /// the CRF of a forward pass.
  Var<Scalar> nll(const Output& out, const Tensor<Scalar>& depth_true);
  /// (lambda_gamma/2)||gamma||^2 + (lambda_beta/2)||beta||^2 over the unary
  /// CNN weights and beta.
  Var<Scalar> regularizer(Graph<Scalar>& g);
  /// Clips beta at zero.
  void project_beta();

  /// Superpixel patches [G,3,P,P] for one [3,H,W] image in [-1,1].
  Tensor<Scalar> extract_patches(const Tensor<Scalar>& rgb, const SuperpixelGraph& graph) const;

  std::vector<Parameter<Scalar>*> parameters() override;
  std::vector<ConvLayer<Scalar>*> conv_layers() override;

  Parameter<Scalar>& beta() noexcept { return beta_; }
  UnaryCnn<Scalar>& unary() noexcept { return unary_; }
  const CrfOptions& options() const noexcept { return opts_; }

 private:
  CrfOptions opts_;
  UnaryCnn<Scalar> unary_;
  Parameter<Scalar> beta_;
};

}  // namespace advdepth
