#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "otcg/config.hpp"
#include "otcg/datasets.hpp"
#include "otcg/forward_physics.hpp"
#include "otcg/losses.hpp"
#include "otcg/models.hpp"
#include "otcg/optim.hpp"

namespace otcg::train {

struct ComponentInfo {
  std::string name;  // G, F, kernel, H, phi, psi
  std::string kind;  // generator, kernel, discriminator
  std::size_t parameters = 0;
};

/// The live networks of one variant:
///   a: G, F, phi, psi      b: G, kernel, phi, psi
///   c: G, phi (+ fixed H)  d: G, H (network), phi, psi
struct Components {
  losses::VariantId variant = losses::VariantId::known_c;
  std::shared_ptr<models::Generator> G;
  std::shared_ptr<models::Generator> F;  // F for a, H_Y for d
  ad::Var kernel;                        // [1,1,K,K] for b
  physics::Boundary kernel_boundary = physics::Boundary::periodic;
  config::KernelSpec::Projection kernel_projection = config::KernelSpec::Projection::none;
  double kernel_mass = 1.0;  // held fixed by the simplex projection
  std::optional<physics::KnownLinearOperator> known;  // c
  std::shared_ptr<models::Discriminator> phi;
  std::shared_ptr<models::Discriminator> psi;

  losses::Map g_map() const;
  losses::ReturnPath back() const;
  losses::Potential phi_fn() const;
  /// Empty for variant c.
  losses::Potential psi_fn() const;

  std::vector<ad::Var> generator_vars() const;
  std::vector<ad::Var> forward_vars() const;  // F / kernel / H_Y
  std::vector<ad::Var> critic_vars() const;
  std::vector<ComponentInfo> manifest() const;
};

/// Builds the components for `cfg.variant`. `physics` is only consulted for
/// variant c, whose operator is known.
Components build_components(const config::ExperimentConfig& cfg, const physics::ForwardOperator& physics,
                            std::uint64_t init_seed);

/// Euclidean projection onto {k >= 0, sum k = mass}.
void project_simplex(std::span<double> k, double mass);

/// Rescales the kernel of variant b to mass mean(Y) / mean(X); a no-op for
/// other variants. Throws ConfigError if the ratio is not positive.
void calibrate_kernel_mass(Components& c, const Tensor& x_pool, const Tensor& y_pool);

/// Rate multiplier for a 0-based epoch: 1 until the last decay_epochs, then
/// linear steps down to 1/(decay_epochs + 1).
double lr_scale(const config::OptimizerConfig& o, int epoch);

struct LogRecord {
  long step = 0;
  losses::LossBundle losses;
};

nlohmann::json to_json(const LogRecord& r);

class Trainer {
 public:
  /// Pools arrive separately; the trainer never sees a pairing.
  Trainer(const config::ExperimentConfig& cfg, Components comps, Tensor x_pool, Tensor y_pool, SeedHierarchy seeds);

  /// Critic ascent on the OT-discriminator loss (plus penalty); generator
  /// parameters are untouched.
  losses::LossBundle discriminator_step(const Tensor& x, const Tensor& y);
  /// Descent on otdisc + gamma * cycle in G and the X -> Y path.
  losses::LossBundle generator_step(const Tensor& x, const Tensor& y);

  using StepHook = std::function<void(const Trainer&, const LogRecord&)>;
  /// epochs x steps_per_epoch x (n_critic critic steps, 1 generator step).
  std::vector<LogRecord> train(const StepHook& hook = {});

  Components& components() { return comps_; }
  const Components& components() const { return comps_; }
  long step() const { return step_; }
  int epoch() const { return epoch_; }
  int steps_per_epoch() const;

 private:
  void check_finite(const losses::LossBundle& b, const char* phase) const;
  void project_kernel();

  config::ExperimentConfig cfg_;
  Components comps_;
  data::BatchIterator x_iter_;
  int y_pool_size_;
  data::BatchIterator y_iter_;
  Rng gp_rng_;
  std::unique_ptr<optim::Optimizer> opt_g_, opt_f_, opt_phi_, opt_psi_;
  long step_ = 0;
  int epoch_ = 0;
  double last_gp_ = 0.0;
};

/// Checkpoint directory: one container per component plus manifest.json
/// {variant, step, seeds, config_hash, components}.
void save_checkpoint(const Components& c, const std::filesystem::path& dir, const nlohmann::json& manifest);
/// Loads parameters into already-built components of the same config.
void load_checkpoint(Components& c, const std::filesystem::path& dir);

}  // namespace otcg::train
