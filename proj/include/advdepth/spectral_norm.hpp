#pragma once

#include "advdepth/autograd.hpp"

#include <Eigen/Core>

namespace advdepth {

/// Power-iteration state for one weight. The weight is viewed as a matrix
/// [dim(0) x rest]; for conv2d weights that is [C_out x C_in*k*k].
template <typename Scalar>
struct SpectralState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector u;  // left singular-vector estimate, unit length
  Vector v;  // right singular-vector estimate, unit length
  int iterations_per_update = 1;

  bool initialized() const noexcept { return u.size() > 0 && v.size() > 0; }
};

/// Runs `iterations` power-iteration updates on the state (cold-starting it
/// from a fixed pseudo-random direction when empty).
template <typename Scalar>
void power_iterate(const Tensor<Scalar>& weight, SpectralState<Scalar>& state, int iterations);

/// sigma = u^T W v after state.iterations_per_update power-iteration updates.
/// Throws InvalidArgument for a zero matrix.
template <typename Scalar>
Scalar estimate_sigma(const Tensor<Scalar>& weight, SpectralState<Scalar>& state);

/// u^T W v for the current state without updating it.
template <typename Scalar>
Scalar sigma_from_state(const Tensor<Scalar>& weight, const SpectralState<Scalar>& state);

/// W / sigma(W), advancing the state once. Throws when sigma < 1e-12.
template <typename Scalar>
Tensor<Scalar> apply_spectral_norm(const Tensor<Scalar>& weight, SpectralState<Scalar>& state);

/// Graph node W / (u^T W v) with u, v held fixed. The gradient flows through
/// the division: dW = G / sigma - <G, W> / sigma^2 * u v^T.
template <typename Scalar>
Var<Scalar> spectral_normalize(Var<Scalar> weight, const SpectralState<Scalar>& state);

/// Largest singular value from a dense SVD (reference oracle).
template <typename Scalar>
Scalar svd_sigma_max(const Tensor<Scalar>& weight);

}  // namespace advdepth
