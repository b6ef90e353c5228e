#pragma once

#include <functional>
#include <string>

#include "otcg/autodiff.hpp"
#include "otcg/rng.hpp"

/// Training objectives.
///
/// Sign convention, used everywhere: `otdisc.generator` is the value the
/// generators minimize; the critics maximize it, which the trainer does by
/// minimizing `otdisc.discriminator = -otdisc.generator` (plus the gradient
/// penalty). All l1-type norms are mean absolute error per element.
namespace otcg::losses {

enum class VariantId { standard_a, linear_b, known_c, unknown_d };

VariantId parse_variant(const std::string& s);  // "a".."d"
std::string to_string(VariantId v);
bool has_psi(VariantId v);

using Map = std::function<ad::Var(const ad::Var&)>;
/// Per-sample potential: [N,...] -> [N,1,1,1].
using Potential = std::function<ad::Var(const ad::Var&)>;

/// What implements the X -> Y return path.
enum class PathKind { network, kernel, known_operator, neural_operator };
PathKind expected_path(VariantId v);

struct ReturnPath {
  PathKind kind = PathKind::network;
  Map map;
};

ad::Var mae(const ad::Var& a, const ad::Var& b);

/// ||y - H x|| + ||G(y) - x|| (lambda = 1).
ad::Var pls_cost(const ad::Var& x, const ad::Var& y, const Map& G, const Map& H);

/// 1/2 [ ||x - G(back(x))|| + ||y - back(G(y))|| ] averaged over the batch.
ad::Var cycle_loss(VariantId v, const ad::Var& x, const ad::Var& y, const Map& G, const ReturnPath& back);
/// Same, with G(y) and back(x) already evaluated.
ad::Var cycle_loss(VariantId v, const ad::Var& x, const ad::Var& y, const ad::Var& g_y, const ad::Var& back_x,
                   const Map& G, const ReturnPath& back);

struct LossPair {
  ad::Var generator;
  ad::Var discriminator;
};

/// Variants b, d: 1/2 { E phi(x) - E phi(G y) + E psi(y) - E psi(back x) }.
/// Variant c:      E phi(x) - E phi(G y)   (no psi).
/// `psi` must be empty for variant c and set for b and d.
LossPair otdisc_loss(VariantId v, const ad::Var& x, const ad::Var& y, const ad::Var& g_y, const ad::Var& back_x,
                     const Potential& phi, const Potential& psi);
LossPair otdisc_loss(VariantId v, const ad::Var& x, const ad::Var& y, const Map& G, const ReturnPath& back,
                     const Potential& phi, const Potential& psi);

/// eta * mean_k (||grad phi(x~_k)||_2 - 1)^2 with x~ = a x + (1 - a) x_gen,
/// a ~ U[0,1] per sample. Differentiable in the critic's parameters.
ad::Var gradient_penalty(const Potential& phi, const Tensor& x, const Tensor& x_gen, double eta, Rng& rng);
/// Explicit interpolation weights, one per sample.
ad::Var gradient_penalty(const Potential& phi, const Tensor& x, const Tensor& x_gen, double eta,
                         const std::vector<double>& alpha);

/// Classic cycleGAN (variant a): E log phi(x) + E log(1 - phi(G y)) + E log psi(y) + E log(1 - psi(F x)),
/// logs clamped at 1e-12. Generators minimize `adversarial`, critics maximize it.
struct StandardLosses {
  ad::Var adversarial;
  ad::Var cycle;
};
/// Only the four log terms, with G(y) and F(x) already evaluated.
ad::Var adversarial_loss(const ad::Var& x, const ad::Var& y, const ad::Var& g_y, const ad::Var& f_x,
                         const Potential& phi, const Potential& psi);
StandardLosses standard_cyclegan_losses(const ad::Var& x, const ad::Var& y, const Map& G, const Map& F,
                                        const Potential& phi, const Potential& psi);
StandardLosses standard_cyclegan_losses(const ad::Var& x, const ad::Var& y, const ad::Var& g_y, const ad::Var& f_x,
                                        const Map& G, const Map& F, const Potential& phi, const Potential& psi);

struct LossBundle {
  double cycle = 0.0;
  double disc = 0.0;  // otdisc generator part (or adversarial value for row a)
  double gp = 0.0;
  double total_generator = 0.0;      // disc + gamma * cycle
  double total_discriminator = 0.0;  // -disc + gp
  double gamma = 10.0;
  double eta = 10.0;

  bool finite() const;
};

LossBundle make_bundle(double cycle, double disc, double gp, double gamma, double eta);

}  // namespace otcg::losses
