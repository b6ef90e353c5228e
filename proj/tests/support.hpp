#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "otcg/autodiff.hpp"
#include "otcg/rng.hpp"
#include "otcg/tensor.hpp"

namespace otcg::test {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between the autodiff gradient of `f` at `x` and
/// central differences (step h), over every coordinate.
inline double fd_check(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x, double h = 1e-6) {
  ad::Var xv(x, true);
  const Tensor g = ad::grad(f(xv), {xv})[0].value();
  double worst = 0.0;
  double scale = 0.0;
  for (double v : g.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f(ad::Var(xp)).item() - f(ad::Var(xm)).item()) / (2.0 * h);
    // Coordinates with tiny gradients are compared against the largest one.
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-3 * scale, 1e-10}));
  }
  return worst;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(OTCG_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}


/// Two-layer conv model x -> conv(leaky(conv(x, w1)), w2), used both as a toy
/// generator (out channels = in channels) and a toy critic (reduced per sample).
struct Toy {
  ad::Var w1, w2;

  Toy(int in_c, int hidden, int out_c, Rng& rng)
      : w1(random_tensor({hidden, in_c, 3, 3}, rng, -0.5, 0.5), true),
        w2(random_tensor({out_c, hidden, 3, 3}, rng, -0.5, 0.5), true) {}

  ad::Var apply(const ad::Var& x, const ad::Var& a, const ad::Var& b) const {
    return ad::conv2d(ad::leaky_relu(ad::conv2d(x, a, {1, 1}), 0.2), b, {1, 1});
  }
  ad::Var operator()(const ad::Var& x) const { return apply(x, w1, w2); }
  ad::Var potential(const ad::Var& x) const { return ad::mean_per_sample(apply(x, w1, w2)); }
};

}  // namespace otcg::test
