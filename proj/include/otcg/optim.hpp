#pragma once

#include <vector>

#include "otcg/autodiff.hpp"

namespace otcg::optim {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// One update; grads[i] matches params[i] in shape.
  virtual void step(const std::vector<Tensor>& grads) = 0;

  /// Multiplies the configured rate; the trainer's decay schedule sets it.
  void set_lr_scale(double s) { lr_scale_ = s; }
  double lr_scale() const { return lr_scale_; }

 protected:
  double lr_scale_ = 1.0;
};

/// Adam over a fixed list of leaf variables, with its own moment state.
class Adam : public Optimizer {
 public:
  Adam(std::vector<ad::Var> params, AdamConfig cfg);

  void step(const std::vector<Tensor>& grads) override;

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  std::vector<ad::Var> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

/// Per-tensor normalized momentum: m <- beta m + (1 - beta) g, then
/// w <- w - lr ||w|| m / ||m||. The step is a fixed fraction of the
/// parameter's size in the direction of the averaged gradient, so the shape
/// of the gradient survives (Adam's per-entry scaling flattens it).
class NormalizedMomentum : public Optimizer {
 public:
  NormalizedMomentum(std::vector<ad::Var> params, double lr, double beta);

  void step(const std::vector<Tensor>& grads) override;
  std::vector<Tensor>& moments() { return m_; }

 private:
  std::vector<ad::Var> params_;
  double lr_, beta_;
  std::vector<Tensor> m_;
};

}  // namespace otcg::optim
