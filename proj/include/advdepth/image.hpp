#pragma once

#include "advdepth/tensor.hpp"

namespace advdepth {

/// Bilinear resampling of a [C,H,W] image with pixel-center alignment.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& image, Index out_h, Index out_w);

/// Nearest-neighbour resampling; never mixes values across pixels.
template <typename Scalar>
Tensor<Scalar> resize_nearest(const Tensor<Scalar>& image, Index out_h, Index out_w);

/// Bilinear resampling of the window [y0, y0+h) x [x0, x0+w) of a [C,H,W] image.
template <typename Scalar>
Tensor<Scalar> crop_resize_bilinear(const Tensor<Scalar>& image, Index y0, Index x0, Index h, Index w, Index out_h,
                                    Index out_w);

/// Luma of a [3,H,W] image: 0.299 r + 0.587 g + 0.114 b, shape [H,W].
template <typename Scalar>
Tensor<Scalar> to_gray(const Tensor<Scalar>& rgb);

/// Sample `n` of a batched [N,...] tensor as an unbatched tensor.
template <typename Scalar>
Tensor<Scalar> batch_item(const Tensor<Scalar>& batch, Index n) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const Index sz = shape_numel(s);
  return Tensor<Scalar>(s, batch.array().segment(n * sz, sz));
}

}  // namespace advdepth
