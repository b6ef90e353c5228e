#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "otcg/errors.hpp"
#include "otcg/forward_physics.hpp"
#include "otcg/losses.hpp"
#include "otcg/ot_oracle.hpp"
#include "support.hpp"

using namespace otcg;
using namespace otcg::losses;
using ad::Var;
using otcg::test::fd_check;
using otcg::test::random_tensor;
using otcg::test::Toy;

namespace {

Map identity_map() {
  return [](const Var& v) { return v; };
}

double loop_mae(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

Potential linear_potential(const Tensor& w) {
  const Var wv(w);
  return [wv](const Var& x) { return ad::sum_per_sample(x * wv); };
}

}  // namespace

TEST_CASE("pls cost examples") {
  const Var x(Tensor({1, 1, 1, 1}, 0.0)), y(Tensor({1, 1, 1, 1}, 1.0));
  CHECK(pls_cost(x, y, identity_map(), identity_map()).item() == 2.0);
  CHECK(pls_cost(y, y, identity_map(), identity_map()).item() == 0.0);

  Rng rng(51);
  const Tensor xt = random_tensor({2, 1, 4, 4}, rng), yt = random_tensor({2, 1, 4, 4}, rng);
  const Map G = [](const Var& v) { return ad::scale(v, 2.0); };
  const Map H = [](const Var& v) { return ad::add_scalar(v, 0.5); };
  Tensor gy = yt, hx = xt;
  for (auto& v : gy.values()) v *= 2.0;
  for (auto& v : hx.values()) v += 0.5;
  CHECK(pls_cost(Var(xt), Var(yt), G, H).item() == doctest::Approx(loop_mae(yt, hx) + loop_mae(gy, xt)).epsilon(1e-12));
}

TEST_CASE("cycle loss matches a scalar loop for the kernel path") {
  Rng rng(52);
  const Tensor x = random_tensor({3, 1, 6, 6}, rng), y = random_tensor({3, 1, 6, 6}, rng);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng);
  const Map G = [](const Var& v) { return ad::scale(v, 0.7); };
  const ReturnPath back{PathKind::kernel,
                        [&](const Var& v) { return physics::LearnableConvKernel::apply(v, Var(k), physics::Boundary::periodic); }};
  const physics::LearnableConvKernel h(k);
  Tensor ghx = h.apply(x), hgy = y;
  for (auto& v : ghx.values()) v *= 0.7;
  for (auto& v : hgy.values()) v *= 0.7;
  hgy = h.apply(hgy);
  const double oracle = 0.5 * (loop_mae(x, ghx) + loop_mae(y, hgy));
  CHECK(cycle_loss(VariantId::linear_b, Var(x), Var(y), G, back).item() == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("cycle loss vanishes for exact inverses and for the full-mask identity") {
  Rng rng(53);
  const Tensor x = random_tensor({2, 2, 8, 8}, rng);
  const Map G = [](const Var& v) { return ad::scale(v, 2.0); };
  const ReturnPath half{PathKind::network, [](const Var& v) { return ad::scale(v, 0.5); }};
  CHECK(cycle_loss(VariantId::standard_a, Var(x), Var(x), G, half).item() == 0.0);

  const auto full = physics::KnownLinearOperator::fourier_subsample(physics::make_mask({1, 0.0, {}}, 8, 8, 0));
  const ReturnPath known{PathKind::known_operator, [&](const Var& v) { return full.apply(v); }};
  CHECK(cycle_loss(VariantId::known_c, Var(x), Var(x), identity_map(), known).item() < 1e-14);
}

TEST_CASE("property: cycle loss is invariant to batch permutation") {
  Rng rng(54);
  Toy g(1, 3, 1, rng);
  const Map G = [&](const Var& v) { return g(v); };
  const ReturnPath back{PathKind::network, [](const Var& v) { return ad::square(v); }};
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({5, 1, 4, 4}, rng), y = random_tensor({5, 1, 4, 4}, rng);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> xs, ys;
    for (int p : perm) {
      xs.push_back(x.slice_batch(p, 1));
      ys.push_back(y.slice_batch(p, 1));
    }
    const double a = cycle_loss(VariantId::standard_a, Var(x), Var(y), G, back).item();
    const double b = cycle_loss(VariantId::standard_a, Var(stack_batch(xs)), Var(stack_batch(ys)), G, back).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-13));
  }
}

TEST_CASE("cycle loss rejects a mismatched return path") {
  const Var x(Tensor({1, 1, 2, 2}));
  const ReturnPath net{PathKind::network, identity_map()};
  CHECK_THROWS_AS(cycle_loss(VariantId::linear_b, x, x, identity_map(), net), ConfigError);
  CHECK_THROWS_AS(cycle_loss(VariantId::known_c, x, x, identity_map(), ReturnPath{PathKind::known_operator, {}}),
                  ConfigError);
}

TEST_CASE("otdisc closed forms") {
  Rng rng(55);
  const Tensor x = random_tensor({1, 1, 3, 3}, rng), gy = random_tensor({1, 1, 3, 3}, rng);
  const Tensor w = random_tensor({1, 1, 3, 3}, rng);
  const auto pair = otdisc_loss(VariantId::known_c, Var(x), Var(x), Var(gy), Var(x), linear_potential(w), {});
  CHECK(pair.generator.item() == doctest::Approx(dot(w, x) - dot(w, gy)).epsilon(1e-13));
  CHECK(pair.discriminator.item() == -pair.generator.item());

  const Potential constant = [](const Var& v) { return ad::scale(ad::sum_per_sample(v), 0.0); };
  const Tensor y = random_tensor({4, 1, 3, 3}, rng), x4 = random_tensor({4, 1, 3, 3}, rng);
  CHECK(otdisc_loss(VariantId::unknown_d, Var(x4), Var(y), Var(y), Var(x4), constant, constant).generator.item() == 0.0);

  // b and d: half of the phi part plus the psi part.
  const Tensor bx = random_tensor({1, 1, 3, 3}, rng), yy = random_tensor({1, 1, 3, 3}, rng);
  const Tensor w2 = random_tensor({1, 1, 3, 3}, rng);
  const double expected = 0.5 * (dot(w, x) - dot(w, gy) + dot(w2, yy) - dot(w2, bx));
  CHECK(otdisc_loss(VariantId::linear_b, Var(x), Var(yy), Var(gy), Var(bx), linear_potential(w), linear_potential(w2))
            .generator.item() == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("otdisc enforces the variant's critic set") {
  const Var x(Tensor({1, 1, 2, 2}));
  const Potential p = [](const Var& v) { return ad::sum_per_sample(v); };
  CHECK_THROWS_AS(otdisc_loss(VariantId::known_c, x, x, x, x, p, p), ConfigError);
  CHECK_THROWS_AS(otdisc_loss(VariantId::linear_b, x, x, x, x, p, {}), ConfigError);
  CHECK_THROWS_AS(otdisc_loss(VariantId::standard_a, x, x, x, x, p, p), ConfigError);
}

TEST_CASE("gradient penalty of a linear critic has the closed form (|w| - 1)^2") {
  Tensor w({1, 1, 1, 2});
  w[0] = 3.0;
  w[1] = 4.0;
  Rng rng(56);
  const Tensor x = random_tensor({3, 1, 1, 2}, rng), g = random_tensor({3, 1, 1, 2}, rng);
  CHECK(gradient_penalty(linear_potential(w), x, g, 10.0, rng).item() == doctest::Approx(160.0).epsilon(1e-12));
  w[0] = 0.6;
  w[1] = 0.8;
  CHECK(std::abs(gradient_penalty(linear_potential(w), x, g, 10.0, rng).item()) < 1e-12);
}

TEST_CASE("gradient penalty needs a differentiable critic") {
  Rng rng(57);
  const Tensor x = random_tensor({2, 1, 2, 2}, rng);
  const Potential frozen = [](const Var& v) { return ad::constant(ad::sum_per_sample(v).value()); };
  CHECK_THROWS_AS(gradient_penalty(frozen, x, x, 10.0, rng), CapabilityError);
}

TEST_CASE("adversarial loss: hand evaluation and guards") {
  const Var x(Tensor({2, 1, 2, 2}, 0.3));
  const Potential half = [](const Var& v) { return ad::add_scalar(ad::scale(ad::mean_per_sample(v), 0.0), 0.5); };
  CHECK(adversarial_loss(x, x, x, x, half, half).item() == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-14));
  const Potential one = [](const Var& v) { return ad::add_scalar(ad::scale(ad::mean_per_sample(v), 0.0), 1.0); };
  // log(1 - 1) is clamped at log(1e-12).
  CHECK(adversarial_loss(x, x, x, x, one, one).item() == doctest::Approx(2.0 * std::log(1e-12)).epsilon(1e-12));
  const Potential out_of_range = [](const Var& v) { return ad::add_scalar(ad::mean_per_sample(v), 1.0); };
  CHECK_THROWS_AS(adversarial_loss(x, x, x, x, out_of_range, half), DomainError);
}

TEST_CASE("loss gradients in the generator match central differences on a toy model") {
  Rng rng(58);
  const Tensor x = random_tensor({2, 1, 5, 5}, rng), y = random_tensor({2, 1, 5, 5}, rng);
  Toy g(1, 3, 1, rng), f(1, 3, 1, rng), phi(1, 2, 1, rng), psi(1, 2, 1, rng);
  const Var kernel(random_tensor({1, 1, 3, 3}, rng, 0.0, 0.3), true);
  const auto known = physics::KnownLinearOperator::explicit_matrix(Eigen::MatrixXd::Random(25, 25), {1, 1, 5, 5},
                                                                   {1, 1, 5, 5});
  auto phi_fn = [&](const Var& v) { return phi.potential(v); };
  auto psi_fn = [&](const Var& v) { return psi.potential(v); };

  const std::pair<VariantId, ReturnPath> rows[] = {
      {VariantId::standard_a, {PathKind::network, [&](const Var& v) { return f(v); }}},
      {VariantId::linear_b,
       {PathKind::kernel, [&](const Var& v) { return physics::LearnableConvKernel::apply(v, kernel, physics::Boundary::periodic); }}},
      {VariantId::known_c, {PathKind::known_operator, [&](const Var& v) { return known.apply(v); }}},
      {VariantId::unknown_d, {PathKind::network, {}}}};
  for (const auto& [variant, back0] : rows) {
    CAPTURE(to_string(variant));
    ReturnPath back = back0;
    if (variant == VariantId::unknown_d) back = {PathKind::neural_operator, [&](const Var& v) { return f(v); }};
    auto loss_in = [&, variant, back](const Var& w1) {
      const Map G = [&](const Var& v) { return g.apply(v, w1, g.w2); };
      const Var cyc = cycle_loss(variant, Var(x), Var(y), G, back);
      if (variant == VariantId::standard_a) {
        const auto sig = [](const Toy& t) {
          return [&t](const Var& v) { return ad::sigmoid(t.potential(v)); };
        };
        return standard_cyclegan_losses(Var(x), Var(y), G, back.map, sig(phi), sig(psi)).adversarial + cyc;
      }
      const Potential psi_or_none = variant == VariantId::known_c ? Potential{} : Potential(psi_fn);
      return otdisc_loss(variant, Var(x), Var(y), G, back, phi_fn, psi_or_none).generator + ad::scale(cyc, 10.0);
    };
    CHECK(fd_check(loss_in, g.w1.value()) < 1e-4);
  }
}

TEST_CASE("gradient penalty differentiates in the critic weights") {
  Rng rng(59);
  const Tensor x = random_tensor({2, 1, 4, 4}, rng), g = random_tensor({2, 1, 4, 4}, rng);
  Toy critic(1, 2, 1, rng);
  const std::vector<double> alpha{0.3, 0.8};
  auto pen = [&](const Var& w1) {
    const Potential p = [&](const Var& v) { return ad::mean_per_sample(critic.apply(v, w1, critic.w2)); };
    return gradient_penalty(p, x, g, 10.0, alpha);
  };
  CHECK(fd_check(pen, critic.w1.value(), 1e-5) < 1e-4);
}

TEST_CASE("property: a 1-Lipschitz linear critic never exceeds the exact transport distance") {
  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 5;
    const Tensor x = random_tensor({n, 1, 2, 2}, rng), gy = random_tensor({n, 1, 2, 2}, rng);
    Tensor w = random_tensor({1, 1, 2, 2}, rng);
    const double norm = std::sqrt(dot(w, w));
    for (auto& v : w.values()) v /= norm;
    const double est = otdisc_loss(VariantId::known_c, Var(x), Var(x), Var(gy), Var(x), linear_potential(w), {})
                           .generator.item();
    std::vector<ot::Point> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(Eigen::Map<const Eigen::VectorXd>(x.data() + 4 * i, 4));
      b.push_back(Eigen::Map<const Eigen::VectorXd>(gy.data() + 4 * i, 4));
    }
    CHECK(est <= ot::wasserstein1(ot::DiscretePointSet::uniform(a), ot::DiscretePointSet::uniform(b)) + 1e-8);
  }
}

TEST_CASE("bundle totals") {
  const auto b = make_bundle(0.5, 0.25, 1.0, 10.0, 10.0);
  CHECK(b.total_generator == 0.25 + 5.0);
  CHECK(b.total_discriminator == -0.25 + 1.0);
  CHECK(b.finite());
  CHECK_FALSE(make_bundle(std::nan(""), 0, 0, 1, 1).finite());
  CHECK(parse_variant("d") == VariantId::unknown_d);
  CHECK_THROWS_AS(parse_variant("e"), ConfigError);
}
