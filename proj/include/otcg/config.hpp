#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "otcg/datasets.hpp"
#include "otcg/forward_physics.hpp"
#include "otcg/losses.hpp"
#include "otcg/models.hpp"

namespace otcg::config {

/// Measurement physics used to fabricate Y from X.
struct ForwardSpec {
  enum class Type { identity, conv_kernel, fourier_subsample };
  Type type = Type::identity;
  int kernel_size = 9;
  double psf_sigma = 1.5;
  physics::Boundary boundary = physics::Boundary::periodic;
  physics::MaskSpec mask;
};

/// Learnable K x K kernel of variant b.
struct KernelSpec {
  enum class Init { delta, gaussian };
  /// simplex: nonnegative with the total mass held at its initial value.
  enum class Projection { none, nonnegative, simplex };
  /// data: rescale the initial kernel so its sum is mean(Y) / mean(X), the
  /// mass a convolution between the two pools has to carry.
  enum class Mass { unit, data };
  int size = 9;
  Init init = Init::gaussian;
  double init_sigma = 2.5;
  Projection projection = Projection::nonnegative;
  Mass mass = Mass::unit;
  physics::Boundary boundary = physics::Boundary::periodic;
};

struct ModelConfig {
  models::GeneratorSpec generator;
  /// F (variant a) or H_Y (variant d).
  models::GeneratorSpec backward;
  models::DiscriminatorSpec phi;
  models::DiscriminatorSpec psi;
  KernelSpec kernel;
};

struct OptimizerConfig {
  enum class ForwardKind { adam, normalized };
  double lr = 1e-4;
  /// Learning rate of the X -> Y path (F, kernel or H_Y); <= 0 means lr.
  /// For forward_kind normalized it is the relative step size.
  double lr_forward = 0.0;
  ForwardKind forward_kind = ForwardKind::adam;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int n_critic = 5;
  int batch_size = 8;
  int epochs = 1;
  /// Generator steps per epoch; 0 = one pass over the Y pool.
  int steps_per_epoch = 0;
  /// Final epochs over which every rate decays linearly towards zero.
  int decay_epochs = 0;

  double forward_lr() const { return lr_forward > 0.0 ? lr_forward : lr; }
};

struct DataConfig {
  data::SyntheticSceneSpec scene;
  bool hflip = false;
  bool vflip = false;
};

struct EvalConfig {
  double pixel_size = 1.0;
  bool frc = false;
};

struct ExperimentConfig {
  std::string name = "run";
  losses::VariantId variant = losses::VariantId::known_c;
  std::uint64_t seed = 0;
  DataConfig data;
  ForwardSpec forward;
  ModelConfig model;
  OptimizerConfig optimizer;
  double gamma = 10.0;
  double eta = 10.0;
  models::LipschitzMode lipschitz = models::LipschitzMode::penalty(10.0);
  int checkpoint_every = 0;  // generator steps; 0 = final only
  EvalConfig evaluation;
};

/// Strict: unknown keys and wrong types are ConfigErrors naming the path,
/// e.g. "optimizer.n_critic: must be >= 1".
ExperimentConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load(const std::filesystem::path& path);

/// Cross-field checks (variant vs forward physics, shapes).
void validate(const ExperimentConfig& c);

/// 16 hex digits, FNV-1a over the canonical JSON dump.
std::string hash(const ExperimentConfig& c);

physics::ForwardOperator build_forward(const ForwardSpec& f, int size, int channels, std::uint64_t mask_seed);

}  // namespace otcg::config
