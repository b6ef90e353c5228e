#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "otcg/autodiff.hpp"
#include "otcg/rng.hpp"

namespace otcg::models {

struct Parameter {
  std::string name;
  ad::Var var;
};

enum class Norm { none, instance, batch };

/// A linear map inside a network, described well enough to compute its true
/// operator norm: conv with `geometry` applied to a (in_c, in_h, in_w) input.
struct LinearLayer {
  std::size_t param = 0;
  kernels::ConvGeometry geometry;
  int in_c = 0, in_h = 0, in_w = 0;
};

class Module {
 public:
  virtual ~Module() = default;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<ad::Var> vars() const;
  std::size_t parameter_count() const;
  const std::vector<LinearLayer>& linear_layers() const { return layers_; }

 protected:
  std::size_t add_param(std::string name, Tensor init);
  std::size_t add_conv(const std::string& name, int in_c, int out_c, int k, Rng& rng);
  void register_layer(LinearLayer l) { layers_.push_back(l); }
  const ad::Var& p(std::size_t i) const { return params_[i].var; }

 private:
  std::vector<Parameter> params_;
  std::vector<LinearLayer> layers_;
};

enum class Mode { train, eval };

struct GeneratorSpec {
  int depth = 3;
  int base_channels = 32;
  Norm norm = Norm::instance;
  int in_channels = 1;
  int out_channels = 1;
  /// Output = input + head(features); needs in_channels == out_channels.
  bool residual = true;
  bool zero_init_head = true;
  double leaky_slope = 0.2;
};

/// U-Net: per stage two 3x3 conv-norm-LeakyReLU blocks, 2x2 mean pooling on
/// the way down, nearest upsampling and skip concatenation on the way up,
/// 1x1 linear head.
class Generator : public Module {
 public:
  Generator(GeneratorSpec spec, std::uint64_t seed);

  const GeneratorSpec& spec() const { return spec_; }
  ad::Var forward(const ad::Var& x, Mode mode = Mode::train);
  /// Evaluation-mode forward without graph recording.
  Tensor operator()(const Tensor& x);

  /// Batch-norm running statistics per normalized unit; empty until the
  /// first training-mode forward.
  std::vector<Tensor>& running_means() { return running_mean_; }
  std::vector<Tensor>& running_vars() { return running_var_; }

 private:
  struct ConvUnit {
    std::size_t weight, bias;
    int channels;
  };
  ad::Var unit(const ad::Var& x, const ConvUnit& u, Mode mode, std::size_t norm_slot, bool act = true);
  ad::Var normalize(const ad::Var& x, Mode mode, std::size_t slot);

  GeneratorSpec spec_;
  std::vector<ConvUnit> enc_, dec_up_, dec_;
  ConvUnit head_{};
  // Batch-norm running statistics, one slot per normalized unit.
  std::vector<Tensor> running_mean_, running_var_;
};

enum class DiscStyle { patch, global_scalar };
enum class Head { linear, sigmoid };

struct DiscriminatorSpec {
  DiscStyle style = DiscStyle::patch;
  int blocks = 3;
  int base_channels = 32;
  int in_channels = 1;
  int kernel = 4;
  int stride = 2;
  Head head = Head::linear;
  Norm norm = Norm::instance;
  /// Reference input size; fixes the global head width and the geometry
  /// used for operator-norm estimates.
  int input_h = 32;
  int input_w = 32;
  double leaky_slope = 0.2;
};

/// Critic / classifier. `forward_map` returns [N,1,h,w] (patch) or [N,1,1,1];
/// `potential` reduces it to one value per sample.
class Discriminator : public Module {
 public:
  Discriminator(DiscriminatorSpec spec, std::uint64_t seed);

  const DiscriminatorSpec& spec() const { return spec_; }
  ad::Var forward_map(const ad::Var& x) const;
  ad::Var potential(const ad::Var& x) const;
  Tensor operator()(const Tensor& x) const;

  /// Instance norm is skipped while spectral normalization is active.
  void set_norm_enabled(bool on) { norm_enabled_ = on; }
  bool norm_enabled() const { return norm_enabled_; }

  /// Warm-start vectors for power iteration, one per linear layer.
  std::vector<Tensor>& power_vectors() { return power_vectors_; }

 private:
  DiscriminatorSpec spec_;
  std::vector<std::pair<std::size_t, std::size_t>> blocks_;  // (weight, bias)
  std::size_t out_w_ = 0, out_b_ = 0;
  bool norm_enabled_ = true;
  std::vector<Tensor> power_vectors_;
};

struct LipschitzMode {
  enum class Kind { clip, spectral_norm, gradient_penalty };
  Kind kind = Kind::gradient_penalty;
  double clip = 0.01;
  int power_iters = 1;
  double eta = 10.0;

  static LipschitzMode clipping(double c) { return {Kind::clip, c, 1, 0.0}; }
  static LipschitzMode spectral(int iters) { return {Kind::spectral_norm, 0.0, iters, 0.0}; }
  static LipschitzMode penalty(double eta) { return {Kind::gradient_penalty, 0.0, 1, eta}; }
};

/// Projects the module's weights onto the constraint set of `mode`.
/// Returns the per-layer operator norms estimated before rescaling
/// (empty for clip and gradient_penalty).
std::vector<double> enforce_lipschitz(Module& m, const LipschitzMode& mode,
                                      std::vector<Tensor>* power_vectors = nullptr);

/// Leading singular value of a dense matrix by power iteration on A^T A.
double power_iteration(const Eigen::MatrixXd& a, int iters, std::uint64_t seed = 0);

/// Operator norm of x -> conv(x, layer weight) on the layer's reference
/// input, by power iteration with conv and its adjoint. `u` (input-shaped)
/// is used as the start vector when non-empty and updated in place.
double conv_operator_norm(const Tensor& weight, const LinearLayer& layer, int iters, Tensor& u);

/// Dense matrix of x -> conv(x, weight) on the layer's reference input.
/// Test support for small layers.
Eigen::MatrixXd conv_operator_matrix(const Tensor& weight, const LinearLayer& layer);

ad::Var instance_norm(const ad::Var& x, double eps = 1e-5);

}  // namespace otcg::models
