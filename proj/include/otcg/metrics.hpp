#pragma once

#include <optional>
#include <span>
#include <vector>

#include "otcg/tensor.hpp"

namespace otcg::metrics {

enum class PsnrMode {
  /// 20 log10( n ||x*||_inf / ||x - x*||_2 ), n = element count.
  peak_times_count,
  /// 20 log10( ||x*||_inf / rms(x - x*) ).
  conventional,
};

/// +inf when x == x*. Throws DomainError for an all-zero reference.
/// Operates on whole tensors; use per_image for batches.
double psnr(std::span<const double> x, std::span<const double> x_star, PsnrMode mode = PsnrMode::peak_times_count);
double psnr(const Tensor& x, const Tensor& x_star, PsnrMode mode = PsnrMode::peak_times_count);

struct SsimConstants {
  double c1;
  double c2;
};
/// (0.01 L)^2, (0.03 L)^2 with L the dynamic range of x* (1 if x* is constant).
SsimConstants default_ssim_constants(std::span<const double> x_star);

/// Whole-image SSIM from global means, variances and covariance.
double ssim(std::span<const double> x, std::span<const double> x_star, SsimConstants c);
double ssim(std::span<const double> x, std::span<const double> x_star);

struct FrcCurve {
  std::vector<double> frc;    // ring r = 0 .. n/2
  std::vector<int> samples;   // Fourier coefficients per ring
  double threshold = 1.0 / 7.0;
  /// Spatial frequency at the first 1/7 crossing, cycles per length unit.
  std::optional<double> crossing_frequency;
  /// 1 / crossing frequency, or the Nyquist sentinel 2 * pixel_size.
  double resolution = 0.0;
  bool nyquist_limited = true;
};

/// Fourier ring correlation of two square single-plane images. Rings with
/// no power in either image read 1 if both are empty, 0 otherwise.
FrcCurve frc(const Tensor& x1, const Tensor& x2, double pixel_size = 1.0);
double frc_resolution(const Tensor& x1, const Tensor& x2, double pixel_size = 1.0);

/// Zero-mean normalized cross-correlation (Pearson) of two equal-size arrays.
double ncc(std::span<const double> a, std::span<const double> b);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
};
Summary summarize(std::vector<double> v);

/// Per-image metrics for a batch [N,C,H,W] against its reference batch.
struct MetricReport {
  std::vector<double> psnr_db;
  std::vector<double> psnr_conventional_db;
  std::vector<double> ssim;
  std::optional<double> frc_resolution;

  Summary psnr_summary() const { return summarize(psnr_db); }
  Summary psnr_conventional_summary() const { return summarize(psnr_conventional_db); }
  Summary ssim_summary() const { return summarize(ssim); }
};

MetricReport evaluate(const Tensor& output, const Tensor& reference);

}  // namespace otcg::metrics
