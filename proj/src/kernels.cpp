#include "otcg/kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

#include "otcg/errors.hpp"

namespace otcg::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Dims {
  int n, ci, h, w, co, kh, kw, ho, wo;
};

Dims conv_dims(const Shape& xs, const Shape& ws, ConvGeometry g) {
  if (xs.c != ws.c)
    throw DimensionError("conv2d: input channels " + std::to_string(xs.c) +
                         " vs weight channels " + std::to_string(ws.c));
  Dims d{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, 0, 0};
  d.ho = conv_out_size(xs.h, ws.h, g);
  d.wo = conv_out_size(xs.w, ws.w, g);
  if (d.ho <= 0 || d.wo <= 0) throw DimensionError("conv2d: empty output for input " + xs.str());
  return d;
}

// Output columns j whose source column j*stride - pad + b lies inside [0, w).
struct ColRange {
  int lo, hi;
};

ColRange valid_cols(const Dims& d, ConvGeometry g, int b) {
  int lo = 0, hi = d.wo;
  while (lo < hi && lo * g.stride - g.pad + b < 0) ++lo;
  while (hi > lo && (hi - 1) * g.stride - g.pad + b >= d.w) --hi;
  return {lo, hi};
}

// cols is (ci*kh*kw) x (ho*wo), row-major.
void im2col(const double* x, const Dims& d, ConvGeometry g, double* cols) {
  const int hw_out = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c)
    for (int a = 0; a < d.kh; ++a)
      for (int b = 0; b < d.kw; ++b) {
        double* row = cols + static_cast<std::size_t>((c * d.kh + a) * d.kw + b) * hw_out;
        const double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
        const ColRange r = valid_cols(d, g, b);
        for (int i = 0; i < d.ho; ++i) {
          const int yy = i * g.stride - g.pad + a;
          double* out = row + static_cast<std::size_t>(i) * d.wo;
          if (yy < 0 || yy >= d.h) {
            std::fill(out, out + d.wo, 0.0);
            continue;
          }
          std::fill(out, out + r.lo, 0.0);
          std::fill(out + r.hi, out + d.wo, 0.0);
          const double* src = plane + static_cast<std::size_t>(yy) * d.w;
          const int off = b - g.pad;
          if (g.stride == 1) {
            std::copy(src + r.lo + off, src + r.hi + off, out + r.lo);
          } else {
            for (int j = r.lo; j < r.hi; ++j) out[j] = src[j * g.stride + off];
          }
        }
      }
}

void col2im(const double* cols, const Dims& d, ConvGeometry g, double* x) {
  const int hw_out = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c)
    for (int a = 0; a < d.kh; ++a)
      for (int b = 0; b < d.kw; ++b) {
        const double* row = cols + static_cast<std::size_t>((c * d.kh + a) * d.kw + b) * hw_out;
        double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
        const ColRange r = valid_cols(d, g, b);
        for (int i = 0; i < d.ho; ++i) {
          const int yy = i * g.stride - g.pad + a;
          if (yy < 0 || yy >= d.h) continue;
          const double* in = row + static_cast<std::size_t>(i) * d.wo;
          double* dst = plane + static_cast<std::size_t>(yy) * d.w;
          const int off = b - g.pad;
          for (int j = r.lo; j < r.hi; ++j) dst[j * g.stride + off] += in[j];
        }
      }
}

}  // namespace

int conv_out_size(int in, int k, ConvGeometry g) {
  if (g.stride < 1) throw DimensionError("conv stride must be >= 1");
  return (in + 2 * g.pad - k) / g.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g) {
  const Dims d = conv_dims(x.shape(), w.shape(), g);
  Tensor y(Shape{d.n, d.co, d.ho, d.wo});
  const int rows = d.ci * d.kh * d.kw;
  const int hw_out = d.ho * d.wo;
  ConstMapMat wm(w.data(), d.co, rows);
#pragma omp parallel
  {
    std::vector<double> cols(static_cast<std::size_t>(rows) * hw_out);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      im2col(x.data() + x.shape().sample() * n, d, g, cols.data());
      MapMat ym(y.data() + y.shape().sample() * n, d.co, hw_out);
      ym.noalias() = wm * ConstMapMat(cols.data(), rows, hw_out);
    }
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, ConvGeometry g, int in_h, int in_w) {
  const Shape ws = w.shape();
  const Dims d = conv_dims(Shape{gy.shape().n, ws.c, in_h, in_w}, ws, g);
  if (gy.shape().c != d.co || gy.shape().h != d.ho || gy.shape().w != d.wo)
    throw DimensionError("conv2d_input_grad: gradient shape " + gy.shape().str());
  Tensor gx(Shape{d.n, d.ci, d.h, d.w});
  const int rows = d.ci * d.kh * d.kw;
  const int hw_out = d.ho * d.wo;
  ConstMapMat wm(w.data(), d.co, rows);
#pragma omp parallel
  {
    std::vector<double> cols(static_cast<std::size_t>(rows) * hw_out);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      MapMat cm(cols.data(), rows, hw_out);
      cm.noalias() = wm.transpose() * ConstMapMat(gy.data() + gy.shape().sample() * n, d.co, hw_out);
      col2im(cols.data(), d, g, gx.data() + gx.shape().sample() * n);
    }
  }
  return gx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, ConvGeometry g, int kh, int kw) {
  const Dims d = conv_dims(x.shape(), Shape{gy.shape().c, x.shape().c, kh, kw}, g);
  if (gy.shape().n != d.n || gy.shape().h != d.ho || gy.shape().w != d.wo)
    throw DimensionError("conv2d_weight_grad: gradient shape " + gy.shape().str());
  const int rows = d.ci * d.kh * d.kw;
  const int hw_out = d.ho * d.wo;
  const std::size_t wsize = static_cast<std::size_t>(d.co) * rows;
  std::vector<double> partial(wsize * d.n);
#pragma omp parallel
  {
    std::vector<double> cols(static_cast<std::size_t>(rows) * hw_out);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      im2col(x.data() + x.shape().sample() * n, d, g, cols.data());
      MapMat pm(partial.data() + wsize * n, d.co, rows);
      pm.noalias() = ConstMapMat(gy.data() + gy.shape().sample() * n, d.co, hw_out) *
                     ConstMapMat(cols.data(), rows, hw_out).transpose();
    }
  }
  Tensor gw(Shape{d.co, d.ci, d.kh, d.kw});
  for (int n = 0; n < d.n; ++n)
    for (std::size_t i = 0; i < wsize; ++i) gw[i] += partial[wsize * n + i];
  return gw;
}

Tensor avg_pool2(const Tensor& x) {
  const Shape s = x.shape();
  if (s.h % 2 || s.w % 2) throw DimensionError("avg_pool2 needs even spatial dims, got " + s.str());
  Tensor y(Shape{s.n, s.c, s.h / 2, s.w / 2});
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = x.data() + s.plane() * p;
    double* out = y.data() + y.shape().plane() * p;
    for (int i = 0; i < s.h / 2; ++i)
      for (int j = 0; j < s.w / 2; ++j) {
        const double* r0 = in + static_cast<std::size_t>(2 * i) * s.w + 2 * j;
        const double* r1 = r0 + s.w;
        out[i * (s.w / 2) + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return y;
}

Tensor upsample2(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y(Shape{s.n, s.c, s.h * 2, s.w * 2});
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = x.data() + s.plane() * p;
    double* out = y.data() + y.shape().plane() * p;
    for (int i = 0; i < 2 * s.h; ++i)
      for (int j = 0; j < 2 * s.w; ++j) out[i * 2 * s.w + j] = in[(i / 2) * s.w + j / 2];
  }
  return y;
}

Tensor gather_planes(const Tensor& x, const PlaneMap& m) {
  const Shape s = x.shape();
  if (s.h != m.in_h || s.w != m.in_w)
    throw DimensionError("gather_planes: input " + s.str() + " does not match map");
  Tensor y(Shape{s.n, s.c, m.out_h, m.out_w});
  const int planes = s.n * s.c;
  const std::size_t out_plane = y.shape().plane();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = x.data() + s.plane() * p;
    double* out = y.data() + out_plane * p;
    for (std::size_t k = 0; k < out_plane; ++k) out[k] = m.index[k] >= 0 ? in[m.index[k]] : 0.0;
  }
  return y;
}

Tensor scatter_add_planes(const Tensor& g, const PlaneMap& m) {
  const Shape s = g.shape();
  if (s.h != m.out_h || s.w != m.out_w)
    throw DimensionError("scatter_add_planes: input " + s.str() + " does not match map");
  Tensor x(Shape{s.n, s.c, m.in_h, m.in_w});
  const int planes = s.n * s.c;
  const std::size_t out_plane = s.plane();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = g.data() + out_plane * p;
    double* out = x.data() + x.shape().plane() * p;
    for (std::size_t k = 0; k < out_plane; ++k)
      if (m.index[k] >= 0) out[m.index[k]] += in[k];
  }
  return x;
}

}  // namespace otcg::kernels
