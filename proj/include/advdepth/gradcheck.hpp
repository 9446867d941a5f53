#pragma once

#include "advdepth/crf.hpp"

#include <functional>
#include <string>
#include <vector>

namespace advdepth {

enum class GradScope { primitives, unet, crf, all };

struct GradCheckOptions {
  int seeds = 20;
  double tolerance = 1e-4;
  double step = 1e-6;
  Index max_coords = 16;  // finite-difference coordinates sampled per tensor
  std::uint64_t base_seed = 0;
  /// Name of a check whose analytic gradient is deliberately perturbed.
  std::string inject_fault;
};

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;  // worst over seeds and tensors
  double tolerance = 0.0;
  long coords = 0;
  long skipped = 0;  // perturbations that crossed an activation kink
  int seeds = 0;
  bool passed = false;
};

/// One differentiable case: leaves (`inputs`) and parameters whose gradients
/// are compared, and a scalar loss built from the input leaves.
struct GradCase {
  std::vector<Tensord> inputs;
  std::vector<Parameter<double>*> params;
  std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)> loss;
};

struct CaseError {
  double max_error = 0.0;
  long coords = 0;
  long skipped = 0;
};

/// Central differences against reverse mode. Error per tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6) over the
/// sampled coordinates; steps that change any kink signature are skipped.
CaseError check_case(GradCase& c, const GradCheckOptions& opts, Rng& rng, bool inject_fault = false);

std::vector<std::string> gradcheck_names(GradScope scope);
std::vector<GradCheckResult> run_gradcheck(GradScope scope, const GradCheckOptions& opts = {});
std::string format_gradcheck(const std::vector<GradCheckResult>& results);

/// Random superpixel graph with exactly g nodes on an h x w grid (nearest-seed
/// regions), random similarities in (0, 1], h in [-1, 1], beta in [0, 2].
SuperpixelGraph random_crf_graph(Rng& rng, int g, Index height, Index width);

/// MAP by plain gradient ascent on the energy (independent of the solver).
Eigen::VectorXd crf_map_ascent(const SuperpixelGraph& graph, double tol = 1e-13, int max_iter = 200000);

}  // namespace advdepth
