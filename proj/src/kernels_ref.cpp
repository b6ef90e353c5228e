#include "otcg/errors.hpp"
#include "otcg/kernels.hpp"

// Direct-loop kernels. Serial on purpose: they are the oracle the parallel
// kernels are tested against.
namespace otcg::kernels::ref {

Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g) {
  const Shape xs = x.shape(), ws = w.shape();
  if (xs.c != ws.c) throw DimensionError("ref::conv2d channel mismatch");
  const int ho = conv_out_size(xs.h, ws.h, g), wo = conv_out_size(xs.w, ws.w, g);
  Tensor y(Shape{xs.n, ws.n, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (int c = 0; c < xs.c; ++c)
            for (int a = 0; a < ws.h; ++a)
              for (int b = 0; b < ws.w; ++b) {
                const int yy = i * g.stride - g.pad + a, xx = j * g.stride - g.pad + b;
                if (yy >= 0 && yy < xs.h && xx >= 0 && xx < xs.w) acc += w.at(o, c, a, b) * x.at(n, c, yy, xx);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, ConvGeometry g, int in_h, int in_w) {
  const Shape gs = gy.shape(), ws = w.shape();
  Tensor gx(Shape{gs.n, ws.c, in_h, in_w});
  for (int n = 0; n < gs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < gs.h; ++i)
        for (int j = 0; j < gs.w; ++j)
          for (int c = 0; c < ws.c; ++c)
            for (int a = 0; a < ws.h; ++a)
              for (int b = 0; b < ws.w; ++b) {
                const int yy = i * g.stride - g.pad + a, xx = j * g.stride - g.pad + b;
                if (yy >= 0 && yy < in_h && xx >= 0 && xx < in_w)
                  gx.at(n, c, yy, xx) += w.at(o, c, a, b) * gy.at(n, o, i, j);
              }
  return gx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, ConvGeometry g, int kh, int kw) {
  const Shape xs = x.shape(), gs = gy.shape();
  Tensor gw(Shape{gs.c, xs.c, kh, kw});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < gs.c; ++o)
      for (int i = 0; i < gs.h; ++i)
        for (int j = 0; j < gs.w; ++j)
          for (int c = 0; c < xs.c; ++c)
            for (int a = 0; a < kh; ++a)
              for (int b = 0; b < kw; ++b) {
                const int yy = i * g.stride - g.pad + a, xx = j * g.stride - g.pad + b;
                if (yy >= 0 && yy < xs.h && xx >= 0 && xx < xs.w)
                  gw.at(o, c, a, b) += gy.at(n, o, i, j) * x.at(n, c, yy, xx);
              }
  return gw;
}

Tensor avg_pool2(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h / 2; ++i)
        for (int j = 0; j < s.w / 2; ++j)
          y.at(n, c, i, j) = 0.25 * (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j) +
                                     x.at(n, c, 2 * i, 2 * j + 1) + x.at(n, c, 2 * i + 1, 2 * j + 1));
  return y;
}

Tensor upsample2(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < 2 * s.h; ++i)
        for (int j = 0; j < 2 * s.w; ++j) y.at(n, c, i, j) = x.at(n, c, i / 2, j / 2);
  return y;
}

}  // namespace otcg::kernels::ref
