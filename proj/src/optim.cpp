#include "otcg/optim.hpp"

#include <cmath>

#include "otcg/errors.hpp"

namespace otcg::optim {

Adam::Adam(std::vector<ad::Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw ConfigError("adam: lr must be >= 0");
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw DimensionError("adam: gradient count mismatch");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = cfg_.lr * lr_scale_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require_same_shape(grads[i].shape(), params_[i].shape(), "adam");
    if (cfg_.lr == 0.0) continue;  // keeps parameters bitwise unchanged
    double* w = params_[i].mutable_value().data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const double* g = grads[i].data();
    const std::size_t n = grads[i].shape().numel();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
  }
}

NormalizedMomentum::NormalizedMomentum(std::vector<ad::Var> params, double lr, double beta)
    : params_(std::move(params)), lr_(lr), beta_(beta) {
  if (!(lr_ >= 0.0)) throw ConfigError("normalized momentum: lr must be >= 0");
  if (!(beta_ >= 0.0 && beta_ < 1.0)) throw ConfigError("normalized momentum: beta must be in [0, 1)");
  for (const auto& p : params_) m_.emplace_back(p.shape());
}

void NormalizedMomentum::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw DimensionError("normalized momentum: gradient count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require_same_shape(grads[i].shape(), params_[i].shape(), "normalized momentum");
    Tensor& m = m_[i];
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = beta_ * m[k] + (1.0 - beta_) * grads[i][k];
    const double mn = std::sqrt(dot(m, m));
    if (lr_ == 0.0 || mn == 0.0) continue;
    Tensor& w = params_[i].mutable_value();
    const double scale = lr_ * lr_scale_ * std::sqrt(dot(w, w)) / mn;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= scale * m[k];
  }
}

}  // namespace otcg::optim
