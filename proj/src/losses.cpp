#include "otcg/losses.hpp"

#include <cmath>
#include <random>

#include "otcg/errors.hpp"

namespace otcg::losses {

using ad::Var;

VariantId parse_variant(const std::string& s) {
  if (s == "a") return VariantId::standard_a;
  if (s == "b") return VariantId::linear_b;
  if (s == "c") return VariantId::known_c;
  if (s == "d") return VariantId::unknown_d;
  throw ConfigError("unknown variant '" + s + "' (expected a, b, c or d)");
}

std::string to_string(VariantId v) {
  switch (v) {
    case VariantId::standard_a: return "a";
    case VariantId::linear_b: return "b";
    case VariantId::known_c: return "c";
    case VariantId::unknown_d: return "d";
  }
  return "?";
}

bool has_psi(VariantId v) { return v != VariantId::known_c; }

PathKind expected_path(VariantId v) {
  switch (v) {
    case VariantId::standard_a: return PathKind::network;
    case VariantId::linear_b: return PathKind::kernel;
    case VariantId::known_c: return PathKind::known_operator;
    case VariantId::unknown_d: return PathKind::neural_operator;
  }
  return PathKind::network;
}

Var mae(const Var& a, const Var& b) { return ad::mean(ad::abs(a - b)); }

Var pls_cost(const Var& x, const Var& y, const Map& G, const Map& H) { return mae(y, H(x)) + mae(G(y), x); }

namespace {

void check_path(VariantId v, const ReturnPath& back) {
  if (!back.map) throw ConfigError("variant " + to_string(v) + ": return path is not set");
  if (back.kind != expected_path(v)) throw ConfigError("variant " + to_string(v) + ": return path has the wrong kind");
}

Var batch_mean(const Var& per_sample) { return ad::mean(per_sample); }

}  // namespace

Var cycle_loss(VariantId v, const Var& x, const Var& y, const Var& g_y, const Var& back_x, const Map& G,
               const ReturnPath& back) {
  check_path(v, back);
  return ad::scale(mae(x, G(back_x)) + mae(y, back.map(g_y)), 0.5);
}

Var cycle_loss(VariantId v, const Var& x, const Var& y, const Map& G, const ReturnPath& back) {
  check_path(v, back);
  return cycle_loss(v, x, y, G(y), back.map(x), G, back);
}

LossPair otdisc_loss(VariantId v, const Var& x, const Var& y, const Var& g_y, const Var& back_x,
                     const Potential& phi, const Potential& psi) {
  if (v == VariantId::standard_a) throw ConfigError("variant a uses the log-likelihood losses");
  if (!phi) throw ConfigError("otdisc_loss: phi is required");
  Var l = batch_mean(phi(x)) - batch_mean(phi(g_y));
  if (v == VariantId::known_c) {
    if (psi) throw ConfigError("variant c has no psi discriminator");
  } else {
    if (!psi) throw ConfigError("variant " + to_string(v) + " needs a psi discriminator");
    l = ad::scale(l + batch_mean(psi(y)) - batch_mean(psi(back_x)), 0.5);
  }
  return {l, ad::neg(l)};
}

LossPair otdisc_loss(VariantId v, const Var& x, const Var& y, const Map& G, const ReturnPath& back,
                     const Potential& phi, const Potential& psi) {
  check_path(v, back);
  return otdisc_loss(v, x, y, G(y), back.map(x), phi, psi);
}

Var gradient_penalty(const Potential& phi, const Tensor& x, const Tensor& x_gen, double eta,
                     const std::vector<double>& alpha) {
  require_same_shape(x.shape(), x_gen.shape(), "gradient_penalty");
  const Shape s = x.shape();
  if (static_cast<int>(alpha.size()) != s.n) throw DimensionError("gradient_penalty: one alpha per sample");
  Tensor mix(s);
  const std::size_t per = s.sample();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t i = n * per + k;
      mix.data()[i] = alpha[n] * x.data()[i] + (1.0 - alpha[n]) * x_gen.data()[i];
    }
  Var xt(std::move(mix), true);
  const Var out = phi(xt);
  if (!out.requires_grad())
    throw CapabilityError("gradient_penalty: critic output is not differentiable in its input");
  const Var g = ad::grad(ad::sum(out), {xt}, true)[0];
  const Var norm = ad::sqrt(ad::add_scalar(ad::sum_per_sample(ad::square(g)), 1e-12));
  return ad::scale(ad::mean(ad::square(ad::add_scalar(norm, -1.0))), eta);
}

Var gradient_penalty(const Potential& phi, const Tensor& x, const Tensor& x_gen, double eta, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> alpha(static_cast<std::size_t>(x.shape().n));
  for (auto& a : alpha) a = u(rng);
  return gradient_penalty(phi, x, x_gen, eta, alpha);
}

namespace {

Var checked_log(const Var& p, bool complement) {
  for (double v : p.value().values())
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("discriminator output outside (0,1): " + std::to_string(v));
  const Var q = complement ? ad::add_scalar(ad::neg(p), 1.0) : p;
  return ad::mean(ad::log(ad::clamp(q, 1e-12, 1.0)));
}

}  // namespace

Var adversarial_loss(const Var& x, const Var& y, const Var& g_y, const Var& f_x, const Potential& phi,
                     const Potential& psi) {
  return checked_log(phi(x), false) + checked_log(phi(g_y), true) + checked_log(psi(y), false) +
         checked_log(psi(f_x), true);
}

StandardLosses standard_cyclegan_losses(const Var& x, const Var& y, const Var& g_y, const Var& f_x, const Map& G,
                                        const Map& F, const Potential& phi, const Potential& psi) {
  StandardLosses out;
  out.adversarial = adversarial_loss(x, y, g_y, f_x, phi, psi);
  out.cycle = ad::scale(mae(x, G(f_x)) + mae(y, F(g_y)), 0.5);
  return out;
}

StandardLosses standard_cyclegan_losses(const Var& x, const Var& y, const Map& G, const Map& F,
                                        const Potential& phi, const Potential& psi) {
  return standard_cyclegan_losses(x, y, G(y), F(x), G, F, phi, psi);
}

bool LossBundle::finite() const {
  return std::isfinite(cycle) && std::isfinite(disc) && std::isfinite(gp) && std::isfinite(total_generator) &&
         std::isfinite(total_discriminator);
}

LossBundle make_bundle(double cycle, double disc, double gp, double gamma, double eta) {
  LossBundle b;
  b.cycle = cycle;
  b.disc = disc;
  b.gp = gp;
  b.gamma = gamma;
  b.eta = eta;
  b.total_generator = disc + gamma * cycle;
  b.total_discriminator = -disc + gp;
  return b;
}

}  // namespace otcg::losses
