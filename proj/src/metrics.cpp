#include "otcg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "otcg/errors.hpp"
#include "otcg/fft.hpp"

namespace otcg::metrics {

double psnr(std::span<const double> x, std::span<const double> x_star, PsnrMode mode) {
  if (x.size() != x_star.size()) throw DimensionError("psnr: size mismatch");
  double peak = 0.0, err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    peak = std::max(peak, std::abs(x_star[i]));
    const double d = x[i] - x_star[i];
    err += d * d;
  }
  if (peak == 0.0) throw DomainError("psnr: reference image is all zero");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(x.size());
  const double norm = std::sqrt(err);
  if (mode == PsnrMode::peak_times_count) return 20.0 * std::log10(n * peak / norm);
  return 20.0 * std::log10(peak / std::sqrt(err / n));
}

double psnr(const Tensor& x, const Tensor& x_star, PsnrMode mode) {
  require_same_shape(x.shape(), x_star.shape(), "psnr");
  return psnr(x.values(), x_star.values(), mode);
}

SsimConstants default_ssim_constants(std::span<const double> x_star) {
  const auto [lo, hi] = std::minmax_element(x_star.begin(), x_star.end());
  double l = x_star.empty() ? 1.0 : *hi - *lo;
  if (l == 0.0) l = 1.0;
  return {(0.01 * l) * (0.01 * l), (0.03 * l) * (0.03 * l)};
}

double ssim(std::span<const double> x, std::span<const double> y, SsimConstants c) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("ssim: size mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  // Each factor is written as 1 - (nonnegative discrepancy) / (positive
  // normaliser): the same value as the textbook ratio, but exactly 1 for
  // identical inputs regardless of rounding or FMA contraction.
  double vx = 0.0, vy = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    vx += a * a;
    vy += b * b;
    d2 += (a - b) * (a - b);  // = vx + vy - 2 cov
  }
  vx /= n;
  vy /= n;
  d2 /= n;
  const double dm = mx - my;
  const double luminance = 1.0 - dm * dm / (mx * mx + my * my + c.c1);
  const double structure = 1.0 - d2 / (vx + vy + c.c2);
  return luminance * structure;
}

double ssim(std::span<const double> x, std::span<const double> x_star) {
  return ssim(x, x_star, default_ssim_constants(x_star));
}

FrcCurve frc(const Tensor& x1, const Tensor& x2, double pixel_size) {
  require_same_shape(x1.shape(), x2.shape(), "frc");
  const Shape s = x1.shape();
  if (s.n != 1 || s.c != 1 || s.h != s.w) throw DimensionError("frc needs one square plane, got " + s.str());
  if (!(pixel_size > 0.0)) throw DomainError("frc: pixel size must be positive");
  const int n = s.h;
  std::vector<std::complex<double>> f1(x1.values().begin(), x1.values().end());
  std::vector<std::complex<double>> f2(x2.values().begin(), x2.values().end());
  fft::fft2(f1, n, n, false);
  fft::fft2(f2, n, n, false);

  const int rings = n / 2 + 1;
  std::vector<double> cross(rings, 0.0), p1(rings, 0.0), p2(rings, 0.0);
  FrcCurve out;
  out.samples.assign(rings, 0);
  for (int i = 0; i < n; ++i) {
    const int ky = i <= n / 2 ? i : i - n;
    for (int j = 0; j < n; ++j) {
      const int kx = j <= n / 2 ? j : j - n;
      const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kx * kx + ky * ky))));
      if (r >= rings) continue;
      const auto a = f1[static_cast<std::size_t>(i) * n + j], b = f2[static_cast<std::size_t>(i) * n + j];
      cross[r] += (a * std::conj(b)).real();
      p1[r] += std::norm(a);
      p2[r] += std::norm(b);
      ++out.samples[r];
    }
  }
  out.frc.resize(rings);
  for (int r = 0; r < rings; ++r) {
    const double den = std::sqrt(p1[r] * p2[r]);
    if (den > 0.0)
      out.frc[r] = std::clamp(cross[r] / den, -1.0, 1.0);
    else
      out.frc[r] = (p1[r] == 0.0 && p2[r] == 0.0) ? 1.0 : 0.0;
  }

  out.resolution = 2.0 * pixel_size;
  for (int r = 1; r < rings; ++r) {
    if (out.frc[r] >= out.threshold) continue;
    const double a = out.frc[r - 1], b = out.frc[r];
    const double t = a != b ? (a - out.threshold) / (a - b) : 0.0;
    const double ring = (r - 1) + std::clamp(t, 0.0, 1.0);
    const double freq = ring / (n * pixel_size);
    out.crossing_frequency = freq;
    out.nyquist_limited = false;
    out.resolution = freq > 0.0 ? 1.0 / freq : std::numeric_limits<double>::infinity();
    break;
  }
  return out;
}

double frc_resolution(const Tensor& x1, const Tensor& x2, double pixel_size) {
  return frc(x1, x2, pixel_size).resolution;
}

double ncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("ncc: size mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / n);
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  s.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return s;
}

MetricReport evaluate(const Tensor& output, const Tensor& reference) {
  require_same_shape(output.shape(), reference.shape(), "evaluate");
  MetricReport r;
  const std::size_t per = output.shape().sample();
  for (int n = 0; n < output.shape().n; ++n) {
    const std::span<const double> a(output.data() + per * n, per), b(reference.data() + per * n, per);
    r.psnr_db.push_back(psnr(a, b, PsnrMode::peak_times_count));
    r.psnr_conventional_db.push_back(psnr(a, b, PsnrMode::conventional));
    r.ssim.push_back(ssim(a, b));
  }
  return r;
}

}  // namespace otcg::metrics
