#include "advdepth/image.hpp"

#include <algorithm>
#include <cmath>

namespace advdepth {

namespace {

void require_image(const Shape& s, const char* what) {
  if (s.size() != 3) throw DimensionError("rank", std::string(what) + " expects [C,H,W], got " + shape_str(s));
}

}  // namespace

template <typename S>
Tensor<S> crop_resize_bilinear(const Tensor<S>& image, Index y0, Index x0, Index h, Index w, Index out_h,
                               Index out_w) {
  require_image(image.shape(), "crop_resize_bilinear");
  const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > H || x0 + w > W)
    throw DimensionError("window", "crop window outside image " + shape_str(image.shape()));
  Tensor<S> out({C, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (Index oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const Index iy0 = static_cast<Index>(std::floor(fy));
    const Index iy1 = std::min(iy0 + 1, h - 1);
    const double ty = fy - static_cast<double>(iy0);
    for (Index ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const Index ix0 = static_cast<Index>(std::floor(fx));
      const Index ix1 = std::min(ix0 + 1, w - 1);
      const double tx = fx - static_cast<double>(ix0);
      for (Index c = 0; c < C; ++c) {
        const double a = image.at(c, y0 + iy0, x0 + ix0), b = image.at(c, y0 + iy0, x0 + ix1);
        const double d = image.at(c, y0 + iy1, x0 + ix0), e = image.at(c, y0 + iy1, x0 + ix1);
        const double top = a + (b - a) * tx, bot = d + (e - d) * tx;
        out.at(c, oy, ox) = static_cast<S>(top + (bot - top) * ty);
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& image, Index out_h, Index out_w) {
  require_image(image.shape(), "resize_bilinear");
  return crop_resize_bilinear(image, 0, 0, image.dim(1), image.dim(2), out_h, out_w);
}

template <typename S>
Tensor<S> resize_nearest(const Tensor<S>& image, Index out_h, Index out_w) {
  require_image(image.shape(), "resize_nearest");
  const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor<S> out({C, out_h, out_w});
  for (Index oy = 0; oy < out_h; ++oy) {
    const Index iy = std::min(H - 1, static_cast<Index>((oy + 0.5) * H / static_cast<double>(out_h)));
    for (Index ox = 0; ox < out_w; ++ox) {
      const Index ix = std::min(W - 1, static_cast<Index>((ox + 0.5) * W / static_cast<double>(out_w)));
      for (Index c = 0; c < C; ++c) out.at(c, oy, ox) = image.at(c, iy, ix);
    }
  }
  return out;
}

template <typename S>
Tensor<S> to_gray(const Tensor<S>& rgb) {
  require_image(rgb.shape(), "to_gray");
  if (rgb.dim(0) != 3) throw DimensionError("channels", "to_gray expects 3 channels, got " + shape_str(rgb.shape()));
  const Index plane = rgb.dim(1) * rgb.dim(2);
  Tensor<S> g({rgb.dim(1), rgb.dim(2)});
  g.array() = S(0.299) * rgb.array().segment(0, plane) + S(0.587) * rgb.array().segment(plane, plane) +
              S(0.114) * rgb.array().segment(2 * plane, plane);
  return g;
}

#define ADVDEPTH_INSTANTIATE_IMAGE(S)                                                                  \
  template Tensor<S> crop_resize_bilinear(const Tensor<S>&, Index, Index, Index, Index, Index, Index); \
  template Tensor<S> resize_bilinear(const Tensor<S>&, Index, Index);                                 \
  template Tensor<S> resize_nearest(const Tensor<S>&, Index, Index);                                  \
  template Tensor<S> to_gray(const Tensor<S>&);

ADVDEPTH_INSTANTIATE_IMAGE(float)
ADVDEPTH_INSTANTIATE_IMAGE(double)

}  // namespace advdepth
