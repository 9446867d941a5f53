#pragma once

#include "advdepth/autograd.hpp"
#include "advdepth/random.hpp"
#include "advdepth/tensor.hpp"

namespace advdepth {

/// Geometry of a square-kernel 2-d convolution.
struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

/// Output extent of a convolution: floor((n + 2 pad - k) / stride) + 1.
Index conv_out_extent(Index n, const ConvGeometry& g);
/// Output extent of a transposed convolution: (n - 1) stride - 2 pad + k.
Index conv_transpose_out_extent(Index n, const ConvGeometry& g);

namespace kernels {

// Plain tensor kernels. Inputs are [C,H,W] or batched [N,C,H,W]; the output
// has the same rank as the input. Convolution is cross-correlation (the
// kernel is not flipped).

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, int stride, int pad);

/// Adjoint of conv2d in its input argument. `weight` is [C_in, C_out, k, k]
/// where C_in is the channel count of `input` (the conv2d weight layout read
/// in reverse), plus a per-output-channel bias.
template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, int stride, int pad);

}  // namespace kernels

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> weight, Var<Scalar> bias, int stride, int pad);

template <typename Scalar>
Var<Scalar> conv_transpose2d(Var<Scalar> input, Var<Scalar> weight, Var<Scalar> bias, int stride, int pad);

enum class ActivationKind { leaky_relu, relu, tanh, sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.2;  // leaky_relu only
};

template <typename Scalar>
Var<Scalar> activation(Var<Scalar> x, Activation act);

template <typename Scalar>
Var<Scalar> leaky_relu(Var<Scalar> x, double slope) {
  return activation(x, {ActivationKind::leaky_relu, slope});
}
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  return activation(x, {ActivationKind::relu, 0.0});
}
template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  return activation(x, {ActivationKind::tanh, 0.0});
}
template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  return activation(x, {ActivationKind::sigmoid, 0.0});
}

/// Channel concatenation; channels of `a` come first.
template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> slice_channels(Var<Scalar> x, Index begin, Index count);

/// Inverted dropout: in train mode kept elements are scaled by 1/(1-p), so
/// eval mode is the identity.
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> x, double p, Mode mode, Rng& rng);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar s);
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x);
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x);
/// Weighted sum <x, w> against a constant tensor.
template <typename Scalar>
Var<Scalar> dot(Var<Scalar> x, const Tensor<Scalar>& w);
/// Squared Euclidean norm of all elements.
template <typename Scalar>
Var<Scalar> sum_squares(Var<Scalar> x);
template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape);
/// Copy of the value with no gradient path back to `x`.
template <typename Scalar>
Var<Scalar> detach(Var<Scalar> x) {
  return x.graph->constant(x.value());
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  return sub(a, b);
}
template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> x) {
  return scale(x, s);
}

}  // namespace advdepth
