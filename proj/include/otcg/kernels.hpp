#pragma once

#include <vector>

#include "otcg/tensor.hpp"

/// Numeric kernels behind the autodiff ops.
///
/// The top-level functions are the production versions: im2col + GEMM,
/// parallel over the batch with OpenMP. Every reduction over the batch is
/// done into per-sample buffers and summed in index order, so results do not
/// depend on the thread count. `otcg::kernels::ref` holds the direct-loop
/// versions used as test oracles and as the benchmark baseline.
namespace otcg::kernels {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

int conv_out_size(int in, int k, ConvGeometry g);

/// y[n,o,i,j] = sum_{c,a,b} w[o,c,a,b] * x[n,c,i*s-p+a,j*s-p+b] (zero outside).
Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g);
/// Adjoint of conv2d in x: the transposed convolution onto an input of size (h, w).
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, ConvGeometry g, int in_h, int in_w);
/// Adjoint of conv2d in w.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, ConvGeometry g, int kh, int kw);

/// 2x2 mean pooling with stride 2; h and w must be even.
Tensor avg_pool2(const Tensor& x);
/// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& x);

/// Plane index map: out pixel k reads in-plane pixel map[k], or 0 when map[k] < 0.
struct PlaneMap {
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<int> index;
};

Tensor gather_planes(const Tensor& x, const PlaneMap& m);
/// Adjoint of gather_planes.
Tensor scatter_add_planes(const Tensor& g, const PlaneMap& m);

namespace ref {
Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g);
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, ConvGeometry g, int in_h, int in_w);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, ConvGeometry g, int kh, int kw);
Tensor avg_pool2(const Tensor& x);
Tensor upsample2(const Tensor& x);
}  // namespace ref

}  // namespace otcg::kernels
