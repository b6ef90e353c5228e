#include <Eigen/SVD>

#include "doctest.h"
#include "otcg/errors.hpp"
#include "otcg/models.hpp"
#include "support.hpp"

using namespace otcg;
using namespace otcg::models;
using otcg::test::random_tensor;

namespace {

/// One 1x1 conv on a 1x1 image: the layer is exactly its channel matrix.
class MatrixModule : public Module {
 public:
  explicit MatrixModule(const Eigen::MatrixXd& a) {
    Tensor w(Shape{static_cast<int>(a.rows()), static_cast<int>(a.cols()), 1, 1});
    for (int o = 0; o < a.rows(); ++o)
      for (int i = 0; i < a.cols(); ++i) w.at(o, i, 0, 0) = a(o, i);
    register_layer({add_param("w", std::move(w)), {}, static_cast<int>(a.cols()), 1, 1});
  }
  const Tensor& weight() const { return params()[0].var.value(); }
};

DiscriminatorSpec small_critic(DiscStyle style) {
  DiscriminatorSpec s;
  s.style = style;
  s.blocks = 2;
  s.base_channels = 4;
  s.input_h = s.input_w = 16;
  return s;
}

}  // namespace

TEST_CASE("generator shapes and zero-initialised residual head") {
  GeneratorSpec s;
  s.depth = 2;
  s.base_channels = 4;
  s.in_channels = s.out_channels = 2;
  Generator g(s, 7);
  Rng rng(1);
  const Tensor x = random_tensor({3, 2, 16, 16}, rng);
  const Tensor y = g(x);
  CHECK(y.shape() == x.shape());
  CHECK(y.storage() == x.storage());

  s.zero_init_head = false;
  Generator g2(s, 7);
  CHECK(g2(x).storage() != x.storage());
}

TEST_CASE("initialisation is a function of the seed") {
  GeneratorSpec s;
  s.depth = 2;
  s.base_channels = 4;
  s.zero_init_head = false;
  Generator a(s, 11), b(s, 11), c(s, 12);
  REQUIRE(a.params().size() == b.params().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].name == b.params()[i].name);
    CHECK(a.params()[i].var.value().storage() == b.params()[i].var.value().storage());
    differs |= a.params()[i].var.value().storage() != c.params()[i].var.value().storage();
  }
  CHECK(differs);
  CHECK(a.parameter_count() > 0);
}

TEST_CASE("discriminator output shapes") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 1, 16, 16}, rng);
  Discriminator patch(small_critic(DiscStyle::patch), 3);
  const auto map = patch.forward_map(ad::Var(x));
  CHECK(map.shape().n == 2);
  CHECK(map.shape().c == 1);
  CHECK(map.shape().h > 1);
  CHECK(patch(x).shape() == Shape{2, 1, 1, 1});

  Discriminator global(small_critic(DiscStyle::global_scalar), 3);
  CHECK(global.forward_map(ad::Var(x)).shape() == Shape{2, 1, 1, 1});
  CHECK_THROWS_AS(global(random_tensor({1, 1, 8, 8}, rng)), DimensionError);
  CHECK_THROWS_AS(patch(random_tensor({1, 2, 16, 16}, rng)), DimensionError);

  auto sig = small_critic(DiscStyle::patch);
  sig.head = Head::sigmoid;
  const Tensor p = Discriminator(sig, 3)(x);
  for (double v : p.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("construction errors") {
  GeneratorSpec g;
  g.in_channels = 1;
  g.out_channels = 2;
  CHECK_THROWS_AS(Generator(g, 0), ConfigError);
  g.residual = false;
  CHECK_NOTHROW(Generator(g, 0));
  auto d = small_critic(DiscStyle::patch);
  d.norm = Norm::batch;
  CHECK_THROWS_AS(Discriminator(d, 0), ConfigError);
  d = small_critic(DiscStyle::patch);
  d.blocks = 0;
  CHECK_THROWS_AS(Discriminator(d, 0), ConfigError);
}

TEST_CASE("clipping bounds every weight") {
  Discriminator d(small_critic(DiscStyle::patch), 4);
  enforce_lipschitz(d, LipschitzMode::clipping(0.01));
  for (const auto& p : d.params())
    for (double v : p.var.value().values()) CHECK(std::abs(v) <= 0.01);
}

TEST_CASE("spectral normalisation of diag(3, 1)") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 3.0;
  a(1, 1) = 1.0;
  MatrixModule m(a);
  const auto norms = enforce_lipschitz(m, LipschitzMode::spectral(60));
  REQUIRE(norms.size() == 1);
  CHECK(norms[0] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(m.weight()[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m.weight()[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("property: power iteration agrees with the SVD") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(1, 7);
    Eigen::MatrixXd a(dim(rng), dim(rng));
    std::normal_distribution<double> n;
    for (auto& v : a.reshaped()) v = n(rng);
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
    CHECK(power_iteration(a, 2000, trial) == doctest::Approx(sigma).epsilon(1e-6));
  }
}

TEST_CASE("conv operator norm agrees with the SVD of the explicit matrix") {
  Rng rng(6);
  for (auto geometry : {kernels::ConvGeometry{1, 1}, kernels::ConvGeometry{2, 1}, kernels::ConvGeometry{1, 0}}) {
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const LinearLayer layer{0, geometry, 2, 6, 6};
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(conv_operator_matrix(w, layer)).singularValues()(0);
    Tensor u;
    CHECK(conv_operator_norm(w, layer, 5000, u) == doctest::Approx(sigma).epsilon(1e-6));
  }
}

TEST_CASE("property: a spectrally normalised critic is 1-Lipschitz on random pairs") {
  auto spec = small_critic(DiscStyle::patch);
  Discriminator d(spec, 8);
  d.set_norm_enabled(false);
  enforce_lipschitz(d, LipschitzMode::spectral(300), &d.power_vectors());
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor({1, 1, 16, 16}, rng), y = random_tensor({1, 1, 16, 16}, rng);
    Tensor diff = x;
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] -= y[i];
    CHECK(std::abs(d(x).item() - d(y).item()) <= norm2(diff) * (1.0 + 1e-6));
  }
}

TEST_CASE("instance norm standardises each channel") {
  Rng rng(10);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng, -3.0, 7.0);
  const Tensor y = instance_norm(ad::Var(x), 0.0).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      for (int i = 0; i < 25; ++i) m += y[(n * 3 + c) * 25 + i];
      m /= 25;
      for (int i = 0; i < 25; ++i) v += std::pow(y[(n * 3 + c) * 25 + i] - m, 2);
      CHECK(std::abs(m) < 1e-12);
      CHECK(v / 25 == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("generator input gradient matches central differences") {
  GeneratorSpec s;
  s.depth = 2;
  s.base_channels = 3;
  s.zero_init_head = false;
  Generator g(s, 13);
  Rng rng(14);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  const Tensor w = random_tensor({1, 1, 4, 4}, rng);
  auto f = [&](const ad::Var& v) { return ad::sum(g.forward(v) * ad::Var(w)); };
  CHECK(otcg::test::fd_check(f, x) < 1e-4);
}
