#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "otcg/kernels.hpp"
#include "otcg/tensor.hpp"

/// Reverse-mode automatic differentiation over NCHW tensors.
///
/// Every op's backward rule is itself written with differentiable ops, so
/// `grad(..., create_graph = true)` yields gradients that can be
/// differentiated again. The gradient penalty needs this: it is a function
/// of the critic's input gradient and is minimized over the critic weights.
namespace otcg::ad {

struct Node;

class Var {
 public:
  Var() = default;
  /// A leaf. Parameters are leaves with `requires_grad = true`.
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  /// Leaf-only; used by optimizers and constraint projections.
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Node* node() const { return node_.get(); }
  double item() const { return value().item(); }

 private:
  friend Var make_op(Tensor, std::vector<Var>, std::function<std::vector<Var>(const Var&)>);
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<std::vector<Var>(const Var& grad_out)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> parents;
  BackwardFn backward;
};

/// Builds an op result. The graph edge is only recorded when grad mode is on
/// and some parent requires a gradient; otherwise the result is a constant.
Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// d output / d inputs. `output` is reduced with `seed` (default: ones).
/// Inputs the output does not depend on get zero gradients.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, bool create_graph = false,
                      const Var& seed = {});

Var constant(Tensor t);
Var constant_like(const Shape& s, double v);

// Elementwise. Binary ops broadcast size-1 dims.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var sqrt(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// Elementwise clamp; the gradient is zero where the bound is active.
Var clamp(const Var& a, double lo, double hi);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);

// Broadcasting and reductions.
Var expand(const Var& a, const Shape& to);
Var reduce_to(const Var& a, const Shape& to);
Var sum(const Var& a);
Var mean(const Var& a);
/// [N,C,H,W] -> [N,1,1,1].
Var sum_per_sample(const Var& a);
Var mean_per_sample(const Var& a);
Var reshape(const Var& a, const Shape& to);

// Convolutions (closed family under differentiation).
Var conv2d(const Var& x, const Var& w, kernels::ConvGeometry g);
Var conv2d_transpose(const Var& gy, const Var& w, kernels::ConvGeometry g, int out_h, int out_w);
Var conv2d_weight_grad(const Var& x, const Var& gy, kernels::ConvGeometry g, int kh, int kw);

Var avg_pool2(const Var& x);
Var upsample2(const Var& x);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int start, int count);
/// Places x at channel offset `start` of a zero tensor with `total` channels.
Var embed_channels(const Var& x, int start, int total);

Var gather(const Var& x, std::shared_ptr<const kernels::PlaneMap> m);
Var scatter_add(const Var& x, std::shared_ptr<const kernels::PlaneMap> m);

}  // namespace otcg::ad
