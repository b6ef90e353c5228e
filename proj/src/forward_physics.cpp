#include "otcg/forward_physics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "otcg/errors.hpp"
#include "otcg/fft.hpp"

namespace otcg::physics {

using ad::Var;

// -------------------------------------------------------------------- masks

int Mask::sampled_lines() const {
  int n = 0;
  for (int r = 0; r < h; ++r) n += line(r);
  return n;
}

double Mask::sampling_ratio() const {
  return static_cast<double>(std::count(grid.begin(), grid.end(), 1)) / static_cast<double>(grid.size());
}

int acs_line_count(const MaskSpec& spec, int h) {
  return static_cast<int>(std::lround(spec.acs_fraction * h));
}

Mask make_mask(const MaskSpec& spec, int h, int w, std::uint64_t seed) {
  if (spec.acs_fraction < 0.0 || spec.acs_fraction > 1.0)
    throw ConfigError("mask: acs_fraction must lie in [0,1], got " + std::to_string(spec.acs_fraction));
  if (spec.acceleration < 1)
    throw ConfigError("mask: acceleration must be >= 1, got " + std::to_string(spec.acceleration));
  if (h < 1 || w < 1) throw ConfigError("mask: empty grid");
  Mask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  std::vector<bool> lines(h, false);
  if (spec.pattern == MaskSpec::Pattern::full || spec.acceleration == 1) {
    std::fill(lines.begin(), lines.end(), true);
  } else {
    const int acs = std::min(h, acs_line_count(spec, h));
    const int first = h / 2 - acs / 2;
    for (int r = first; r < first + acs; ++r) lines[r] = true;
    const int target = std::max(acs, static_cast<int>(std::lround(static_cast<double>(h) / spec.acceleration)));
    std::vector<int> rest;
    for (int r = 0; r < h; ++r)
      if (!lines[r]) rest.push_back(r);
    Rng rng(seed);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (int k = 0; k < target - acs && k < static_cast<int>(rest.size()); ++k) lines[rest[k]] = true;
  }
  for (int r = 0; r < h; ++r)
    if (lines[r]) std::fill_n(m.grid.begin() + static_cast<std::ptrdiff_t>(r) * w, w, 1);
  return m;
}

// ---------------------------------------------------- known linear operator

namespace {

Tensor fourier_project(const Tensor& x, const Mask& mask) {
  const Shape s = x.shape();
  if (s.c != 2 || s.h != mask.h || s.w != mask.w)
    throw DimensionError("fourier_subsample expects [N,2," + std::to_string(mask.h) + "," +
                         std::to_string(mask.w) + "], got " + s.str());
  Tensor y(s);
  const std::size_t plane = s.plane();
#pragma omp parallel
  {
    std::vector<std::complex<double>> buf(plane);
#pragma omp for schedule(static)
    for (int n = 0; n < s.n; ++n) {
      const double* re = x.data() + s.sample() * n;
      const double* im = re + plane;
      for (std::size_t k = 0; k < plane; ++k) buf[k] = {re[k], im[k]};
      fft::fft2(buf, s.h, s.w, false);
      for (int ky = 0; ky < s.h; ++ky) {
        const int r = (ky + s.h / 2) % s.h;
        for (int kx = 0; kx < s.w; ++kx) {
          const int c = (kx + s.w / 2) % s.w;
          if (!mask.at(r, c)) buf[static_cast<std::size_t>(ky) * s.w + kx] = 0.0;
        }
      }
      fft::fft2(buf, s.h, s.w, true);
      double* ore = y.data() + s.sample() * n;
      double* oim = ore + plane;
      for (std::size_t k = 0; k < plane; ++k) {
        ore[k] = buf[k].real();
        oim[k] = buf[k].imag();
      }
    }
  }
  return y;
}

Tensor matrix_apply(const Eigen::MatrixXd& m, const Tensor& x, Shape in, Shape out) {
  const Shape s = x.shape();
  if (s.c != in.c || s.h != in.h || s.w != in.w)
    throw DimensionError("explicit_matrix expects samples " + in.str() + ", got " + s.str());
  Tensor y(Shape{s.n, out.c, out.h, out.w});
  Eigen::Map<const Eigen::MatrixXd> xm(x.data(), static_cast<Eigen::Index>(in.sample()), s.n);
  Eigen::Map<Eigen::MatrixXd> ym(y.data(), static_cast<Eigen::Index>(out.sample()), s.n);
  ym.noalias() = m * xm;
  return y;
}

}  // namespace

KnownLinearOperator KnownLinearOperator::fourier_subsample(Mask mask) {
  if (mask.grid.size() != static_cast<std::size_t>(mask.h) * mask.w)
    throw ConfigError("fourier_subsample: mask grid size does not match its dims");
  KnownLinearOperator op;
  op.kind_ = Kind::fourier_subsample;
  op.mask_ = std::move(mask);
  op.in_sample_ = op.out_sample_ = Shape{1, 2, op.mask_.h, op.mask_.w};
  return op;
}

KnownLinearOperator KnownLinearOperator::explicit_matrix(Eigen::MatrixXd m, Shape in_sample, Shape out_sample) {
  in_sample.n = out_sample.n = 1;
  if (m.cols() != static_cast<Eigen::Index>(in_sample.sample()) ||
      m.rows() != static_cast<Eigen::Index>(out_sample.sample()))
    throw DimensionError("explicit_matrix: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " for samples " + in_sample.str() + " -> " + out_sample.str());
  KnownLinearOperator op;
  op.kind_ = Kind::explicit_matrix;
  op.matrix_ = std::move(m);
  op.in_sample_ = in_sample;
  op.out_sample_ = out_sample;
  return op;
}

KnownLinearOperator KnownLinearOperator::identity(Shape sample) {
  sample.n = 1;
  const auto n = static_cast<Eigen::Index>(sample.sample());
  return explicit_matrix(Eigen::MatrixXd::Identity(n, n), sample, sample);
}

Tensor KnownLinearOperator::apply(const Tensor& x) const {
  if (!x.all_finite()) throw DomainError("forward operator input is not finite");
  if (kind_ == Kind::fourier_subsample) return fourier_project(x, mask_);
  return matrix_apply(matrix_, x, in_sample_, out_sample_);
}

Tensor KnownLinearOperator::adjoint(const Tensor& y) const {
  if (kind_ == Kind::fourier_subsample) return fourier_project(y, mask_);
  return matrix_apply(matrix_.transpose(), y, out_sample_, in_sample_);
}

Var KnownLinearOperator::apply(const Var& x) const {
  auto self = std::make_shared<const KnownLinearOperator>(*this);
  return ad::make_op(apply(x.value()), {x}, [self](const Var& g) {
    if (self->kind_ == Kind::fourier_subsample) return std::vector<Var>{self->apply(g)};
    KnownLinearOperator t = explicit_matrix(self->matrix_.transpose(), self->out_sample_, self->in_sample_);
    return std::vector<Var>{t.apply(g)};
  });
}

// ------------------------------------------------------------- conv kernel

namespace {

Tensor as_kernel(Tensor k) {
  Shape s = k.shape();
  if (s.n != 1 || s.c != 1 || s.h != s.w || s.h < 1)
    throw DimensionError("conv kernel must be [1,1,K,K], got " + s.str());
  if (!k.all_finite()) throw DomainError("conv kernel has non-finite values");
  return k;
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

LearnableConvKernel::LearnableConvKernel(Tensor kernel, Boundary boundary)
    : kernel_(as_kernel(std::move(kernel))), boundary_(boundary) {}

void LearnableConvKernel::set_kernel(Tensor k) {
  Tensor checked = as_kernel(std::move(k));
  if (checked.shape() != kernel_.shape()) throw DimensionError("conv kernel shape is fixed at construction");
  kernel_ = std::move(checked);
}

Tensor LearnableConvKernel::apply(const Tensor& x) const {
  const Shape s = x.shape();
  const int k = size(), c0 = k / 2;
  const bool periodic = boundary_ == Boundary::periodic;
  Tensor y(s);
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = x.data() + s.plane() * p;
    double* out = y.data() + s.plane() * p;
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double acc = 0.0;
        for (int a = 0; a < k; ++a) {
          int yy = i - a + c0;
          if (periodic) yy = wrap(yy, s.h);
          else if (yy < 0 || yy >= s.h) continue;
          for (int b = 0; b < k; ++b) {
            int xx = j - b + c0;
            if (periodic) xx = wrap(xx, s.w);
            else if (xx < 0 || xx >= s.w) continue;
            acc += kernel_[a * k + b] * in[yy * s.w + xx];
          }
        }
        out[i * s.w + j] = acc;
      }
  }
  return y;
}

Tensor LearnableConvKernel::adjoint(const Tensor& y) const {
  const Shape s = y.shape();
  const int k = size(), c0 = k / 2;
  const bool periodic = boundary_ == Boundary::periodic;
  Tensor x(s);
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* in = y.data() + s.plane() * p;
    double* out = x.data() + s.plane() * p;
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double acc = 0.0;
        for (int a = 0; a < k; ++a) {
          int yy = i + a - c0;
          if (periodic) yy = wrap(yy, s.h);
          else if (yy < 0 || yy >= s.h) continue;
          for (int b = 0; b < k; ++b) {
            int xx = j + b - c0;
            if (periodic) xx = wrap(xx, s.w);
            else if (xx < 0 || xx >= s.w) continue;
            acc += kernel_[a * k + b] * in[yy * s.w + xx];
          }
        }
        out[i * s.w + j] = acc;
      }
  }
  return x;
}

Var LearnableConvKernel::apply(const Var& x, const Var& kernel, Boundary boundary) {
  const Shape s = x.shape();
  const Shape ks = kernel.shape();
  if (ks.n != 1 || ks.c != 1 || ks.h != ks.w) throw DimensionError("conv kernel must be [1,1,K,K], got " + ks.str());
  const int k = ks.h, c0 = k / 2, before = k - 1 - c0;

  auto pad = std::make_shared<kernels::PlaneMap>();
  pad->in_h = s.h, pad->in_w = s.w, pad->out_h = s.h + k - 1, pad->out_w = s.w + k - 1;
  pad->index.resize(static_cast<std::size_t>(pad->out_h) * pad->out_w);
  for (int i = 0; i < pad->out_h; ++i)
    for (int j = 0; j < pad->out_w; ++j) {
      int yy = i - before, xx = j - before;
      int idx = -1;
      if (boundary == Boundary::periodic) idx = wrap(yy, s.h) * s.w + wrap(xx, s.w);
      else if (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) idx = yy * s.w + xx;
      pad->index[static_cast<std::size_t>(i) * pad->out_w + j] = idx;
    }

  auto flip = std::make_shared<kernels::PlaneMap>();
  flip->in_h = flip->in_w = flip->out_h = flip->out_w = k;
  flip->index.resize(static_cast<std::size_t>(k) * k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) flip->index[a * k + b] = (k - 1 - a) * k + (k - 1 - b);

  Var planes = ad::reshape(x, Shape{s.n * s.c, 1, s.h, s.w});
  Var y = ad::conv2d(ad::gather(planes, pad), ad::gather(kernel, flip), {1, 0});
  return ad::reshape(y, s);
}

// ------------------------------------------------------------- dispatch

Tensor apply(const ForwardOperator& op, const Tensor& x) {
  return std::visit([&](const auto& o) { return o.apply(x); }, op);
}

Tensor adjoint(const ForwardOperator& op, const Tensor& y) {
  return std::visit(
      [&](const auto& o) -> Tensor {
        if constexpr (std::is_same_v<std::decay_t<decltype(o)>, NeuralOperator>) {
          throw UnsupportedOperatorError("adjoint is undefined for a neural forward operator");
        } else {
          return o.adjoint(y);
        }
      },
      op);
}

Tensor gaussian_kernel(int k, double sigma) {
  if (k < 1 || sigma <= 0.0) throw ConfigError("gaussian_kernel: need k >= 1 and sigma > 0");
  Tensor g(Shape{1, 1, k, k});
  const int c = k / 2;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      g[a * k + b] = std::exp(-((a - c) * (a - c) + (b - c) * (b - c)) / (2.0 * sigma * sigma));
  const double total = g.sum();
  for (auto& v : g.storage()) v /= total;
  return g;
}

Tensor delta_kernel(int k) {
  Tensor d(Shape{1, 1, k, k});
  d[(k / 2) * k + k / 2] = 1.0;
  return d;
}

}  // namespace otcg::physics
