#include <cmath>
#include <complex>
#include <limits>

#include "doctest.h"
#include "otcg/errors.hpp"
#include "otcg/metrics.hpp"
#include "support.hpp"

using namespace otcg;
using namespace otcg::metrics;
using otcg::test::random_tensor;

namespace {

// Loop oracles in long double, written from the definitions.

double psnr_oracle(const Tensor& x, const Tensor& ref) {
  long double peak = 0, err = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    peak = std::max(peak, std::fabs(static_cast<long double>(ref[i])));
    err += std::pow(static_cast<long double>(x[i]) - ref[i], 2);
  }
  return static_cast<double>(20.0L * std::log10(static_cast<long double>(x.size()) * peak / std::sqrt(err)));
}

double ssim_oracle(const Tensor& x, const Tensor& y) {
  const long double n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double vx = 0, vy = 0, c = 0;
  long double lo = y[0], hi = y[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    c += (x[i] - mx) * (y[i] - my);
    lo = std::min<long double>(lo, y[i]);
    hi = std::max<long double>(hi, y[i]);
  }
  vx /= n;
  vy /= n;
  c /= n;
  const long double c1 = std::pow(0.01L * (hi - lo), 2), c2 = std::pow(0.03L * (hi - lo), 2);
  return static_cast<double>((2 * mx * my + c1) * (2 * c + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
}

/// FRC from a direct DFT, rings by rounded radius on the centred grid.
std::vector<double> frc_oracle(const Tensor& a, const Tensor& b) {
  const int n = a.shape().h;
  const double pi = std::acos(-1.0);
  std::vector<double> cross(n / 2 + 1), pa(n / 2 + 1), pb(n / 2 + 1);
  for (int ky = -n / 2 + 1; ky <= n / 2; ++ky)
    for (int kx = -n / 2 + 1; kx <= n / 2; ++kx) {
      const int r = static_cast<int>(std::lround(std::hypot(kx, ky)));
      if (r > n / 2) continue;
      std::complex<double> fa = 0, fb = 0;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const auto e = std::polar(1.0, -2.0 * pi * (ky * y + kx * x) / n);
          fa += a[y * n + x] * e;
          fb += b[y * n + x] * e;
        }
      cross[r] += (fa * std::conj(fb)).real();
      pa[r] += std::norm(fa);
      pb[r] += std::norm(fb);
    }
  std::vector<double> out;
  for (std::size_t r = 0; r < cross.size(); ++r) out.push_back(cross[r] / std::sqrt(pa[r] * pb[r]));
  return out;
}

}  // namespace

TEST_CASE("psnr and ssim against loop oracles on 100 random pairs") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int side = 2 + trial % 15;
    const Tensor ref = random_tensor({1, 1, side, side}, rng, -1.0, 2.0);
    const Tensor x = random_tensor({1, 1, side, side}, rng, -1.0, 2.0);
    CHECK(std::abs(psnr(x, ref) - psnr_oracle(x, ref)) < 1e-9);
    CHECK(std::abs(ssim(x.values(), ref.values()) - ssim_oracle(x, ref)) < 1e-9);
    // The conventional form differs by exactly 10 log10(n).
    CHECK(psnr(x, ref) - psnr(x, ref, PsnrMode::conventional) ==
          doctest::Approx(10.0 * std::log10(side * side)).epsilon(1e-12));
  }
}

TEST_CASE("psnr hand value") {
  // n = 4, peak 2, error norm 1: 20 log10(8).
  const Tensor ref({1, 1, 2, 2}, {2.0, 0.0, 0.0, 0.0});
  const Tensor x({1, 1, 2, 2}, {2.0, 1.0, 0.0, 0.0});
  CHECK(psnr(x, ref) == doctest::Approx(20.0 * std::log10(8.0)).epsilon(1e-14));
}

TEST_CASE("identical images: infinite psnr and unit ssim") {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({1, 2, 6, 6}, rng);
    CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());
    CHECK(ssim(x.values(), x.values()) == 1.0);
  }
  const Tensor flat({1, 1, 3, 3}, 0.4);
  CHECK(ssim(flat.values(), flat.values()) == 1.0);
}

TEST_CASE("metric domain errors") {
  const Tensor zero({1, 1, 2, 2}), one({1, 1, 2, 2}, 1.0);
  CHECK_THROWS_AS(psnr(one, zero), DomainError);
  CHECK_THROWS_AS(psnr(one, Tensor({1, 1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(ssim(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(frc(Tensor({1, 1, 4, 5}), Tensor({1, 1, 4, 5})), DimensionError);
  CHECK_THROWS_AS(frc(one, one, 0.0), DomainError);
  CHECK_THROWS_AS(ncc(std::vector<double>{}, std::vector<double>{}), DimensionError);
}

TEST_CASE("frc against a direct DFT") {
  Rng rng(33);
  for (int n : {4, 8, 10}) {
    const Tensor a = random_tensor({1, 1, n, n}, rng), b = random_tensor({1, 1, n, n}, rng);
    const auto curve = frc(a, b);
    const auto oracle = frc_oracle(a, b);
    REQUIRE(curve.frc.size() == oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r) CHECK(std::abs(curve.frc[r] - oracle[r]) < 1e-10);
  }
}

TEST_CASE("frc of an image with itself never crosses the threshold") {
  Rng rng(34);
  const Tensor a = random_tensor({1, 1, 16, 16}, rng);
  const auto curve = frc(a, a, 0.5);
  for (double v : curve.frc) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(curve.nyquist_limited);
  CHECK_FALSE(curve.crossing_frequency.has_value());
  CHECK(curve.resolution == 1.0);
}

TEST_CASE("frc crossing is interpolated between rings") {
  // Shared low-pass content plus independent noise: correlation falls with radius.
  Rng rng(35);
  const int n = 32;
  Tensor base({1, 1, n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) base[y * n + x] = std::cos(2 * M_PI * x / n) + std::sin(2 * M_PI * 2 * y / n);
  Tensor a = base, b = base;
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] += noise(rng);
    b[i] += noise(rng);
  }
  const auto curve = frc(a, b, 2.0);
  REQUIRE(curve.crossing_frequency.has_value());
  CHECK_FALSE(curve.nyquist_limited);
  const double ring = *curve.crossing_frequency * n * 2.0;
  const int r = static_cast<int>(std::ceil(ring));
  REQUIRE(r >= 1);
  CHECK(curve.frc[r] < curve.threshold);
  CHECK(curve.frc[r - 1] >= curve.threshold);
  const double t = (curve.frc[r - 1] - curve.threshold) / (curve.frc[r - 1] - curve.frc[r]);
  CHECK(ring == doctest::Approx(r - 1 + t).epsilon(1e-12));
  CHECK(curve.resolution == doctest::Approx(1.0 / *curve.crossing_frequency));
}

TEST_CASE("ncc properties") {
  Rng rng(36);
  const Tensor a = random_tensor({1, 1, 5, 5}, rng);
  Tensor b = a;
  for (auto& v : b.values()) v = 3.0 * v - 7.0;
  CHECK(ncc(a.values(), b.values()) == doctest::Approx(1.0).epsilon(1e-14));
  for (auto& v : b.values()) v = -v;
  CHECK(ncc(a.values(), b.values()) == doctest::Approx(-1.0).epsilon(1e-14));
  const Tensor flat({1, 1, 5, 5}, 2.0);
  CHECK(ncc(a.values(), flat.values()) == 0.0);
}

TEST_CASE("summaries and batch reports") {
  const auto s = summarize({3.0, 1.0, 2.0, 10.0});
  CHECK(s.mean == 4.0);
  CHECK(s.median == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(12.5)));
  CHECK(summarize({5.0, 1.0, 3.0}).median == 3.0);

  Rng rng(37);
  const Tensor ref = random_tensor({3, 1, 4, 4}, rng), out = random_tensor({3, 1, 4, 4}, rng);
  const auto report = evaluate(out, ref);
  REQUIRE(report.psnr_db.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(report.psnr_db[i] == psnr(out.slice_batch(i, 1), ref.slice_batch(i, 1)));
    CHECK(report.ssim[i] == ssim(out.slice_batch(i, 1).values(), ref.slice_batch(i, 1).values()));
  }
}
