#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "otcg/autodiff.hpp"
#include "otcg/models.hpp"

namespace otcg::physics {

/// Boolean k-space sampling grid, stored fftshift-centred: row r holds
/// vertical frequency (r - h/2). Lines are rows.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> grid;

  bool at(int r, int c) const { return grid[static_cast<std::size_t>(r) * w + c] != 0; }
  int sampled_lines() const;
  bool line(int r) const { return at(r, 0); }
  double sampling_ratio() const;
};

struct MaskSpec {
  enum class Pattern { uniform_random_lines, full };
  int acceleration = 1;
  double acs_fraction = 0.0;
  Pattern pattern = Pattern::uniform_random_lines;
};

/// Random line mask: the round(acs_fraction*h) central lines plus uniformly
/// drawn lines up to round(h/acceleration) in total.
Mask make_mask(const MaskSpec& spec, int h, int w, std::uint64_t seed);
/// Number of ACS lines make_mask keeps for this spec and height.
int acs_line_count(const MaskSpec& spec, int h);

/// Operator with fixed, known weights.
///   fourier_subsample: F^-1 P_mask F on [N,2,H,W] (real, imaginary) images.
///   explicit_matrix:   y_n = M x_n on flattened samples.
class KnownLinearOperator {
 public:
  enum class Kind { fourier_subsample, explicit_matrix };

  static KnownLinearOperator fourier_subsample(Mask mask);
  static KnownLinearOperator explicit_matrix(Eigen::MatrixXd m, Shape in_sample, Shape out_sample);
  static KnownLinearOperator identity(Shape sample);

  Kind kind() const { return kind_; }
  const Mask& mask() const { return mask_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  Tensor apply(const Tensor& x) const;
  Tensor adjoint(const Tensor& y) const;
  /// Differentiable apply (gradient is the adjoint).
  ad::Var apply(const ad::Var& x) const;

 private:
  Kind kind_ = Kind::explicit_matrix;
  Mask mask_;
  Eigen::MatrixXd matrix_;
  Shape in_sample_, out_sample_;
};

enum class Boundary { periodic, zero_pad };

/// Blur by a K x K kernel, applied to every channel:
///   (h*x)[i,j] = sum_{a,b} h[a,b] x[i-a+K/2, j-b+K/2].
class LearnableConvKernel {
 public:
  LearnableConvKernel(Tensor kernel, Boundary boundary = Boundary::periodic);

  int size() const { return kernel_.shape().h; }
  Boundary boundary() const { return boundary_; }
  const Tensor& kernel() const { return kernel_; }
  void set_kernel(Tensor k);

  Tensor apply(const Tensor& x) const;
  Tensor adjoint(const Tensor& y) const;

  /// Differentiable in both the image and the [1,1,K,K] kernel.
  static ad::Var apply(const ad::Var& x, const ad::Var& kernel, Boundary boundary);

 private:
  Tensor kernel_;
  Boundary boundary_;
};

/// Forward map H_Y(x) realised by a generator network.
class NeuralOperator {
 public:
  explicit NeuralOperator(std::shared_ptr<models::Generator> net) : net_(std::move(net)) {}

  models::Generator& network() const { return *net_; }
  Tensor apply(const Tensor& x) const { return (*net_)(x); }
  ad::Var apply(const ad::Var& x) const { return net_->forward(x); }

 private:
  std::shared_ptr<models::Generator> net_;
};

using ForwardOperator = std::variant<KnownLinearOperator, LearnableConvKernel, NeuralOperator>;

Tensor apply(const ForwardOperator& op, const Tensor& x);
/// Throws UnsupportedOperatorError for NeuralOperator.
Tensor adjoint(const ForwardOperator& op, const Tensor& y);

/// Normalised K x K Gaussian with the kernel's centre at index K/2.
Tensor gaussian_kernel(int k, double sigma);
/// K x K kernel with a single 1 at (K/2, K/2).
Tensor delta_kernel(int k);

}  // namespace otcg::physics
