#include "advdepth/spectral_norm.hpp"

#include "advdepth/random.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace advdepth {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<const RowMat<S>> as_matrix(const Tensor<S>& w) {
  if (w.rank() < 1) throw DimensionError("rank", "spectral norm needs a weight with at least one axis");
  const Index rows = w.dim(0);
  return Eigen::Map<const RowMat<S>>(w.data(), rows, w.size() / rows);
}

template <typename S>
void cold_start(SpectralState<S>& st, Index rows, Index cols) {
  Rng rng(0x5eedULL + static_cast<std::uint64_t>(rows) * 7919ULL + static_cast<std::uint64_t>(cols));
  st.u.resize(rows);
  for (Index i = 0; i < rows; ++i) st.u[i] = static_cast<S>(uniform01(rng) - 0.5);
  if (st.u.norm() == S(0)) st.u.setOnes();
  st.u.normalize();
  st.v = SpectralState<S>::Vector::Zero(cols);
}

}  // namespace

template <typename S>
void power_iterate(const Tensor<S>& weight, SpectralState<S>& state, int iterations) {
  const auto w = as_matrix(weight);
  if (w.cwiseAbs().maxCoeff() == S(0)) throw InvalidArgument("spectral norm of a zero matrix has no direction");
  if (!state.initialized() || state.u.size() != w.rows() || state.v.size() != w.cols())
    cold_start(state, w.rows(), w.cols());
  for (int it = 0; it < iterations; ++it) {
    typename SpectralState<S>::Vector v = w.transpose() * state.u;
    S nv = v.norm();
    if (!(nv > S(0))) {
      // u is orthogonal to the row space; restart from a fresh direction.
      cold_start(state, w.rows(), w.cols());
      state.u = (w * SpectralState<S>::Vector::Ones(w.cols())).normalized();
      v = w.transpose() * state.u;
      nv = v.norm();
      if (!(nv > S(0))) throw InvalidArgument("power iteration collapsed to zero");
    }
    state.v = v / nv;
    typename SpectralState<S>::Vector u = w * state.v;
    state.u = u / u.norm();
  }
}

template <typename S>
S sigma_from_state(const Tensor<S>& weight, const SpectralState<S>& state) {
  const auto w = as_matrix(weight);
  if (state.u.size() != w.rows() || state.v.size() != w.cols())
    throw DimensionError("spectral state", "state vectors do not match weight " + shape_str(weight.shape()));
  return state.u.dot(w * state.v);
}

template <typename S>
S estimate_sigma(const Tensor<S>& weight, SpectralState<S>& state) {
  power_iterate(weight, state, state.iterations_per_update);
  return sigma_from_state(weight, state);
}

template <typename S>
Tensor<S> apply_spectral_norm(const Tensor<S>& weight, SpectralState<S>& state) {
  const S sigma = estimate_sigma(weight, state);
  if (!(sigma >= S(1e-12))) throw NumericError("spectral norm estimate below 1e-12");
  return Tensor<S>(weight.shape(), weight.array() / sigma);
}

template <typename S>
Var<S> spectral_normalize(Var<S> weight, const SpectralState<S>& state) {
  const S sigma = sigma_from_state(weight.value(), state);
  if (!(sigma >= S(1e-12))) throw NumericError("spectral norm estimate below 1e-12");
  Tensor<S> out(weight.shape(), weight.value().array() / sigma);
  // u v^T in the weight's row-major layout.
  Tensor<S> uv(weight.shape());
  Eigen::Map<RowMat<S>>(uv.data(), state.u.size(), state.v.size()).noalias() = state.u * state.v.transpose();
  return weight.graph->record(std::move(out), {weight},
                              [weight, sigma, uv = std::move(uv)](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                                const S proj = (gout.array() * weight.value().array()).sum();
                                g.accumulate(weight, Tensor<S>(weight.shape(), gout.array() / sigma -
                                                                                   (proj / (sigma * sigma)) * uv.array()));
                              });
}

template <typename S>
S svd_sigma_max(const Tensor<S>& weight) {
  const auto w = as_matrix(weight);
  Eigen::JacobiSVD<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> svd(w);
  return svd.singularValues()(0);
}

#define ADVDEPTH_INSTANTIATE_SN(S)                                              \
  template void power_iterate(const Tensor<S>&, SpectralState<S>&, int);        \
  template S estimate_sigma(const Tensor<S>&, SpectralState<S>&);               \
  template S sigma_from_state(const Tensor<S>&, const SpectralState<S>&);       \
  template Tensor<S> apply_spectral_norm(const Tensor<S>&, SpectralState<S>&);  \
  template Var<S> spectral_normalize(Var<S>, const SpectralState<S>&);          \
  template S svd_sigma_max(const Tensor<S>&);

ADVDEPTH_INSTANTIATE_SN(float)
ADVDEPTH_INSTANTIATE_SN(double)

}  // namespace advdepth
