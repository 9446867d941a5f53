#include "advdepth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace advdepth {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapMat = Eigen::Map<const RowMat<S>>;

/// [C,H,W] or [N,C,H,W] viewed as batch, channels, height, width.
struct Dims4 {
  Index n, c, h, w;
  bool batched;
};

Dims4 image_dims(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw DimensionError("rank", std::string(what) + " must be [C,H,W] or [N,C,H,W], got " + shape_str(s));
}

Shape make_image_shape(const Dims4& d) {
  if (d.batched) return {d.n, d.c, d.h, d.w};
  return {d.c, d.h, d.w};
}

// Unfolds every receptive field into a column. `col` is [C*k*k, N*Ho*Wo]
// row-major; column n*Ho*Wo + oy*Wo + ox belongs to output pixel (oy, ox)
// of sample n.
template <typename S>
void im2col(const S* img, const Dims4& d, const ConvGeometry& g, Index ho, Index wo, S* col) {
  const Index k = g.kernel;
  const Index p = ho * wo;
  const Index ncols = d.n * p;
  for (Index c = 0; c < d.c; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        S* row = col + ((c * k + ky) * k + kx) * ncols;
        for (Index n = 0; n < d.n; ++n) {
          const S* plane = img + (n * d.c + c) * d.h * d.w;
          S* out = row + n * p;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            S* orow = out + oy * wo;
            if (iy < 0 || iy >= d.h) {
              std::fill(orow, orow + wo, S(0));
              continue;
            }
            const S* irow = plane + iy * d.w;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              orow[ox] = (ix >= 0 && ix < d.w) ? irow[ix] : S(0);
            }
          }
        }
      }
}

// Adjoint of im2col: scatters columns back, summing overlaps into `img`.
template <typename S>
void col2im(const S* col, const Dims4& d, const ConvGeometry& g, Index ho, Index wo, S* img) {
  const Index k = g.kernel;
  const Index p = ho * wo;
  const Index ncols = d.n * p;
  for (Index c = 0; c < d.c; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const S* row = col + ((c * k + ky) * k + kx) * ncols;
        for (Index n = 0; n < d.n; ++n) {
          S* plane = img + (n * d.c + c) * d.h * d.w;
          const S* in = row + n * p;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            const S* crow = in + oy * wo;
            S* irow = plane + iy * d.w;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < d.w) irow[ix] += crow[ox];
            }
          }
        }
      }
}

// [N, C, P] <-> [C, N*P] layout shuffles.
template <typename S>
void batch_to_channel_major(const S* src, Index n, Index c, Index p, S* dst) {
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch)
      std::copy_n(src + (i * c + ch) * p, p, dst + ch * n * p + i * p);
}
template <typename S>
void channel_major_to_batch(const S* src, Index n, Index c, Index p, S* dst) {
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch)
      std::copy_n(src + ch * n * p + i * p, p, dst + (i * c + ch) * p);
}

void check_geometry(const ConvGeometry& g) {
  if (g.kernel < 1) throw InvalidArgument("kernel size must be >= 1");
  if (g.stride < 1) throw InvalidArgument("stride must be >= 1");
  if (g.pad < 0) throw InvalidArgument("padding must be >= 0");
}

template <typename S>
void check_bias(const Tensor<S>& bias, Index channels) {
  if (bias.rank() != 1 || bias.dim(0) != channels)
    throw DimensionError("bias", "expected (" + std::to_string(channels) + "), got " + shape_str(bias.shape()));
}

struct ConvPlan {
  Dims4 in;
  Index c_out;
  Index ho, wo;
  ConvGeometry geom;
};

template <typename S>
ConvPlan plan_conv(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, int stride, int pad) {
  const Dims4 d = image_dims(input.shape(), "conv2d input");
  if (weight.rank() != 4) throw DimensionError("weight rank", "expected [C_out,C_in,k,k], got " + shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3)) throw DimensionError("kernel", "kernel must be square, got " + shape_str(weight.shape()));
  if (weight.dim(1) != d.c)
    throw DimensionError("channels", "input has " + std::to_string(d.c) + " channels, weight expects " +
                                         std::to_string(weight.dim(1)));
  ConvGeometry g{static_cast<int>(weight.dim(2)), stride, pad};
  check_geometry(g);
  if (d.h + 2 * pad < g.kernel) throw DimensionError("height", "padded height smaller than kernel");
  if (d.w + 2 * pad < g.kernel) throw DimensionError("width", "padded width smaller than kernel");
  check_bias(bias, weight.dim(0));
  return {d, weight.dim(0), conv_out_extent(d.h, g), conv_out_extent(d.w, g), g};
}

struct ConvTPlan {
  Dims4 in;   // transposed-conv input
  Dims4 out;  // transposed-conv output
  ConvGeometry geom;
};

template <typename S>
ConvTPlan plan_conv_t(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, int stride, int pad) {
  const Dims4 d = image_dims(input.shape(), "conv_transpose2d input");
  if (weight.rank() != 4) throw DimensionError("weight rank", "expected [C_in,C_out,k,k], got " + shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3)) throw DimensionError("kernel", "kernel must be square, got " + shape_str(weight.shape()));
  if (weight.dim(0) != d.c)
    throw DimensionError("channels", "input has " + std::to_string(d.c) + " channels, weight expects " +
                                         std::to_string(weight.dim(0)));
  ConvGeometry g{static_cast<int>(weight.dim(2)), stride, pad};
  check_geometry(g);
  const Index ho = conv_transpose_out_extent(d.h, g);
  const Index wo = conv_transpose_out_extent(d.w, g);
  if (ho < 1) throw DimensionError("height", "transposed output height is not positive");
  if (wo < 1) throw DimensionError("width", "transposed output width is not positive");
  check_bias(bias, weight.dim(1));
  Dims4 out{d.n, weight.dim(1), ho, wo, d.batched};
  return {d, out, g};
}

// Forward conv; keeps the unfolded columns when `col_out` is non-null.
template <typename S>
Tensor<S> conv_forward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, const ConvPlan& pl,
                       RowMat<S>* col_out) {
  const Index kk = pl.in.c * pl.geom.kernel * pl.geom.kernel;
  const Index p = pl.ho * pl.wo;
  RowMat<S> col(kk, pl.in.n * p);
  im2col(input.data(), pl.in, pl.geom, pl.ho, pl.wo, col.data());
  CMapMat<S> wm(weight.data(), pl.c_out, kk);
  RowMat<S> out = wm * col;
  for (Index c = 0; c < pl.c_out; ++c) out.row(c).array() += bias[c];
  Tensor<S> result(make_image_shape({pl.in.n, pl.c_out, pl.ho, pl.wo, pl.in.batched}));
  channel_major_to_batch(out.data(), pl.in.n, pl.c_out, p, result.data());
  if (col_out) *col_out = std::move(col);
  return result;
}

template <typename S>
Tensor<S> conv_t_forward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                         const ConvTPlan& pl) {
  const Index kk = pl.out.c * pl.geom.kernel * pl.geom.kernel;
  const Index p = pl.in.h * pl.in.w;
  RowMat<S> xm(pl.in.c, pl.in.n * p);
  batch_to_channel_major(input.data(), pl.in.n, pl.in.c, p, xm.data());
  CMapMat<S> wm(weight.data(), pl.in.c, kk);
  RowMat<S> col = wm.transpose() * xm;
  Tensor<S> result(make_image_shape(pl.out));
  col2im(col.data(), pl.out, pl.geom, pl.in.h, pl.in.w, result.data());
  const Index op = pl.out.h * pl.out.w;
  for (Index n = 0; n < pl.out.n; ++n)
    for (Index c = 0; c < pl.out.c; ++c)
      result.array().segment((n * pl.out.c + c) * op, op) += bias[c];
  return result;
}

template <typename S>
std::uint64_t sign_hash(const Tensor<S>& x) {
  std::uint64_t h = 1469598103934665603ull;
  for (Index i = 0; i < x.size(); ++i) h = (h ^ static_cast<std::uint64_t>(x[i] > S(0))) * 1099511628211ull;
  return h;
}

}  // namespace

Index conv_out_extent(Index n, const ConvGeometry& g) { return (n + 2 * g.pad - g.kernel) / g.stride + 1; }

Index conv_transpose_out_extent(Index n, const ConvGeometry& g) { return (n - 1) * g.stride - 2 * g.pad + g.kernel; }

namespace kernels {

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, int stride, int pad) {
  const ConvPlan pl = plan_conv(input, weight, bias, stride, pad);
  return conv_forward<S>(input, weight, bias, pl, nullptr);
}

template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, int stride,
                           int pad) {
  const ConvTPlan pl = plan_conv_t(input, weight, bias, stride, pad);
  return conv_t_forward<S>(input, weight, bias, pl);
}

}  // namespace kernels

template <typename S>
Var<S> conv2d(Var<S> input, Var<S> weight, Var<S> bias, int stride, int pad) {
  Graph<S>& gr = *input.graph;
  const ConvPlan pl = plan_conv(input.value(), weight.value(), bias.value(), stride, pad);
  auto col = std::make_shared<RowMat<S>>();
  const bool need_grad = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor<S> out = conv_forward<S>(input.value(), weight.value(), bias.value(), pl, need_grad ? col.get() : nullptr);
  return gr.record(std::move(out), {input, weight, bias},
                   [input, weight, bias, pl, col](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                     const Index p = pl.ho * pl.wo;
                     const Index kk = pl.in.c * pl.geom.kernel * pl.geom.kernel;
                     RowMat<S> gm(pl.c_out, pl.in.n * p);
                     batch_to_channel_major(gout.data(), pl.in.n, pl.c_out, p, gm.data());
                     if (weight.requires_grad()) {
                       Tensor<S> gw(weight.shape());
                       MapMat<S>(gw.data(), pl.c_out, kk).noalias() = gm * col->transpose();
                       g.accumulate(weight, std::move(gw));
                     }
                     if (bias.requires_grad()) {
                       Tensor<S> gb(bias.shape());
                       gb.array() = gm.rowwise().sum().array();
                       g.accumulate(bias, std::move(gb));
                     }
                     if (input.requires_grad()) {
                       CMapMat<S> wm(weight.value().data(), pl.c_out, kk);
                       RowMat<S> dcol = wm.transpose() * gm;
                       Tensor<S> gx(input.shape());
                       col2im(dcol.data(), pl.in, pl.geom, pl.ho, pl.wo, gx.data());
                       g.accumulate(input, std::move(gx));
                     }
                   });
}

template <typename S>
Var<S> conv_transpose2d(Var<S> input, Var<S> weight, Var<S> bias, int stride, int pad) {
  Graph<S>& gr = *input.graph;
  const ConvTPlan pl = plan_conv_t(input.value(), weight.value(), bias.value(), stride, pad);
  Tensor<S> out = conv_t_forward<S>(input.value(), weight.value(), bias.value(), pl);
  return gr.record(std::move(out), {input, weight, bias},
                   [input, weight, bias, pl](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                     const Index kk = pl.out.c * pl.geom.kernel * pl.geom.kernel;
                     const Index p = pl.in.h * pl.in.w;
                     RowMat<S> gcol(kk, pl.in.n * p);
                     im2col(gout.data(), pl.out, pl.geom, pl.in.h, pl.in.w, gcol.data());
                     if (bias.requires_grad()) {
                       Tensor<S> gb(bias.shape());
                       const Index op = pl.out.h * pl.out.w;
                       for (Index n = 0; n < pl.out.n; ++n)
                         for (Index c = 0; c < pl.out.c; ++c)
                           gb[c] += gout.array().segment((n * pl.out.c + c) * op, op).sum();
                       g.accumulate(bias, std::move(gb));
                     }
                     if (weight.requires_grad() || input.requires_grad()) {
                       RowMat<S> xm;
                       if (weight.requires_grad()) {
                         xm.resize(pl.in.c, pl.in.n * p);
                         batch_to_channel_major(input.value().data(), pl.in.n, pl.in.c, p, xm.data());
                         Tensor<S> gw(weight.shape());
                         MapMat<S>(gw.data(), pl.in.c, kk).noalias() = xm * gcol.transpose();
                         g.accumulate(weight, std::move(gw));
                       }
                       if (input.requires_grad()) {
                         CMapMat<S> wm(weight.value().data(), pl.in.c, kk);
                         RowMat<S> gxm = wm * gcol;
                         Tensor<S> gx(input.shape());
                         channel_major_to_batch(gxm.data(), pl.in.n, pl.in.c, p, gx.data());
                         g.accumulate(input, std::move(gx));
                       }
                     }
                   });
}

template <typename S>
Var<S> activation(Var<S> x, Activation act) {
  Graph<S>& gr = *x.graph;
  const auto& xv = x.value().array();
  Tensor<S> y(x.shape());
  const S slope = static_cast<S>(act.slope);
  switch (act.kind) {
    case ActivationKind::leaky_relu:
      if (!(act.slope > 0.0 && act.slope < 1.0)) throw InvalidArgument("leaky_relu slope must lie in (0,1)");
      y.array() = (xv > S(0)).select(xv, slope * xv);
      break;
    case ActivationKind::relu:
      y.array() = xv.max(S(0));
      break;
    case ActivationKind::tanh:
      y.array() = xv.tanh();
      break;
    case ActivationKind::sigmoid:
      y.array() = S(1) / (S(1) + (-xv).exp());
      break;
  }
  const bool piecewise = act.kind == ActivationKind::leaky_relu || act.kind == ActivationKind::relu;
  if (piecewise && gr.tracks_kinks()) gr.mix_kink(sign_hash(x.value()));
  return gr.record(std::move(y), {x}, [x, act, slope](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>& out) {
    Tensor<S> gx(x.shape());
    const auto& xv2 = x.value().array();
    switch (act.kind) {
      case ActivationKind::leaky_relu:
        gx.array() = (xv2 > S(0)).select(gout.array(), slope * gout.array());
        break;
      case ActivationKind::relu:
        gx.array() = (xv2 > S(0)).select(gout.array(), S(0));
        break;
      case ActivationKind::tanh:
        gx.array() = gout.array() * (S(1) - out.array().square());
        break;
      case ActivationKind::sigmoid:
        gx.array() = gout.array() * out.array() * (S(1) - out.array());
        break;
    }
    g.accumulate(x, std::move(gx));
  });
}

template <typename S>
Var<S> concat_channels(Var<S> a, Var<S> b) {
  const Dims4 da = image_dims(a.shape(), "concat input");
  const Dims4 db = image_dims(b.shape(), "concat input");
  if (da.batched != db.batched) throw DimensionError("rank", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (da.n != db.n) throw DimensionError("batch", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (da.h != db.h) throw DimensionError("height", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (da.w != db.w) throw DimensionError("width", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index sa = da.c * da.h * da.w, sb = db.c * db.h * db.w;
  Tensor<S> out(make_image_shape({da.n, da.c + db.c, da.h, da.w, da.batched}));
  for (Index n = 0; n < da.n; ++n) {
    out.array().segment(n * (sa + sb), sa) = a.value().array().segment(n * sa, sa);
    out.array().segment(n * (sa + sb) + sa, sb) = b.value().array().segment(n * sb, sb);
  }
  return a.graph->record(std::move(out), {a, b}, [a, b, sa, sb, n = da.n](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
    if (a.requires_grad()) {
      Tensor<S> ga(a.shape());
      for (Index i = 0; i < n; ++i) ga.array().segment(i * sa, sa) = gout.array().segment(i * (sa + sb), sa);
      g.accumulate(a, std::move(ga));
    }
    if (b.requires_grad()) {
      Tensor<S> gb(b.shape());
      for (Index i = 0; i < n; ++i) gb.array().segment(i * sb, sb) = gout.array().segment(i * (sa + sb) + sa, sb);
      g.accumulate(b, std::move(gb));
    }
  });
}

template <typename S>
Var<S> slice_channels(Var<S> x, Index begin, Index count) {
  const Dims4 d = image_dims(x.shape(), "slice input");
  if (begin < 0 || count < 1 || begin + count > d.c)
    throw DimensionError("channels", "slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                         ") outside " + std::to_string(d.c) + " channels");
  const Index plane = d.h * d.w;
  Tensor<S> out(make_image_shape({d.n, count, d.h, d.w, d.batched}));
  for (Index n = 0; n < d.n; ++n)
    out.array().segment(n * count * plane, count * plane) =
        x.value().array().segment((n * d.c + begin) * plane, count * plane);
  return x.graph->record(std::move(out), {x}, [x, d, begin, count, plane](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
    Tensor<S> gx(x.shape());
    for (Index n = 0; n < d.n; ++n)
      gx.array().segment((n * d.c + begin) * plane, count * plane) =
          gout.array().segment(n * count * plane, count * plane);
    g.accumulate(x, std::move(gx));
  });
}

template <typename S>
Var<S> dropout(Var<S> x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout probability must lie in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  auto mask = std::make_shared<Tensor<S>>(x.shape());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (Index i = 0; i < mask->size(); ++i) (*mask)[i] = uniform01(rng) >= p ? keep_scale : S(0);
  Tensor<S> out(x.shape(), x.value().array() * mask->array());
  return x.graph->record(std::move(out), {x}, [x, mask](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
    g.accumulate(x, Tensor<S>(x.shape(), gout.array() * mask->array()));
  });
}

template <typename S>
void same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError("shape", std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  same_shape(a, b, "add");
  return a.graph->record(Tensor<S>(a.shape(), a.value().array() + b.value().array()), {a, b},
                         [a, b](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(a, gout);
                           g.accumulate(b, gout);
                         });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  same_shape(a, b, "sub");
  return a.graph->record(Tensor<S>(a.shape(), a.value().array() - b.value().array()), {a, b},
                         [a, b](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(a, gout);
                           if (b.requires_grad()) g.accumulate(b, Tensor<S>(b.shape(), -gout.array()));
                         });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  same_shape(a, b, "mul");
  return a.graph->record(Tensor<S>(a.shape(), a.value().array() * b.value().array()), {a, b},
                         [a, b](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           if (a.requires_grad()) g.accumulate(a, Tensor<S>(a.shape(), gout.array() * b.value().array()));
                           if (b.requires_grad()) g.accumulate(b, Tensor<S>(b.shape(), gout.array() * a.value().array()));
                         });
}

template <typename S>
Var<S> scale(Var<S> x, S s) {
  return x.graph->record(Tensor<S>(x.shape(), x.value().array() * s), {x},
                         [x, s](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, Tensor<S>(x.shape(), gout.array() * s));
                         });
}

template <typename S>
Var<S> sum(Var<S> x) {
  return x.graph->record(Tensor<S>::constant({1}, x.value().array().sum()), {x},
                         [x](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, Tensor<S>::constant(x.shape(), gout[0]));
                         });
}

template <typename S>
Var<S> mean(Var<S> x) {
  const S inv = S(1) / static_cast<S>(x.value().size());
  return x.graph->record(Tensor<S>::constant({1}, x.value().array().sum() * inv), {x},
                         [x, inv](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, Tensor<S>::constant(x.shape(), gout[0] * inv));
                         });
}

template <typename S>
Var<S> dot(Var<S> x, const Tensor<S>& w) {
  if (x.shape() != w.shape()) throw DimensionError("shape", "dot: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  return x.graph->record(Tensor<S>::constant({1}, (x.value().array() * w.array()).sum()), {x},
                         [x, w](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, Tensor<S>(x.shape(), w.array() * gout[0]));
                         });
}

template <typename S>
Var<S> sum_squares(Var<S> x) {
  return x.graph->record(Tensor<S>::constant({1}, x.value().array().square().sum()), {x},
                         [x](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, Tensor<S>(x.shape(), x.value().array() * (S(2) * gout[0])));
                         });
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  return x.graph->record(x.value().reshaped(std::move(shape)), {x},
                         [x](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                           g.accumulate(x, gout.reshaped(x.shape()));
                         });
}

#define ADVDEPTH_INSTANTIATE_OPS(S)                                                                    \
  template Tensor<S> kernels::conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int); \
  template Tensor<S> kernels::conv_transpose2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,  \
                                               int, int);                                             \
  template Var<S> conv2d(Var<S>, Var<S>, Var<S>, int, int);                                           \
  template Var<S> conv_transpose2d(Var<S>, Var<S>, Var<S>, int, int);                                 \
  template Var<S> activation(Var<S>, Activation);                                                     \
  template Var<S> concat_channels(Var<S>, Var<S>);                                                    \
  template Var<S> slice_channels(Var<S>, Index, Index);                                               \
  template Var<S> dropout(Var<S>, double, Mode, Rng&);                                                \
  template Var<S> add(Var<S>, Var<S>);                                                                \
  template Var<S> sub(Var<S>, Var<S>);                                                                \
  template Var<S> mul(Var<S>, Var<S>);                                                                \
  template Var<S> scale(Var<S>, S);                                                                   \
  template Var<S> sum(Var<S>);                                                                        \
  template Var<S> mean(Var<S>);                                                                       \
  template Var<S> dot(Var<S>, const Tensor<S>&);                                                      \
  template Var<S> sum_squares(Var<S>);                                                               \
  template Var<S> reshape(Var<S>, Shape);

ADVDEPTH_INSTANTIATE_OPS(float)
ADVDEPTH_INSTANTIATE_OPS(double)

}  // namespace advdepth
