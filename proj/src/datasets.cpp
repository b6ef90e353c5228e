#include "otcg/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "otcg/errors.hpp"

namespace otcg::data {

namespace {

double magnitude_std(const double* x, int channels, std::size_t plane) {
  double s = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < plane; ++k) {
    double m;
    if (channels == 2)
      m = std::hypot(x[k], x[plane + k]);
    else {
      m = 0.0;
      for (int c = 0; c < channels; ++c) m += x[c * plane + k] * x[c * plane + k];
      m = std::sqrt(m);
    }
    s += m;
    ss += m * m;
  }
  const double n = static_cast<double>(plane);
  const double var = std::max(0.0, ss / n - (s / n) * (s / n));
  return std::sqrt(var);
}

}  // namespace

double NormalizationRecord::scale_of(int image) const {
  if (method == Method::per_image_std) return per_image.at(static_cast<std::size_t>(image));
  return scale;
}

Tensor NormalizationRecord::normalize(const Tensor& x) const {
  Tensor out = x;
  const std::size_t per = x.shape().sample();
  for (int n = 0; n < x.shape().n; ++n) {
    const double s = scale_of(n);
    for (std::size_t k = 0; k < per; ++k) out[n * per + k] = (x[n * per + k] - offset) / s;
  }
  return out;
}

Tensor NormalizationRecord::denormalize(const Tensor& x) const {
  Tensor out = x;
  const std::size_t per = x.shape().sample();
  for (int n = 0; n < x.shape().n; ++n) {
    const double s = scale_of(n);
    for (std::size_t k = 0; k < per; ++k) out[n * per + k] = x[n * per + k] * s + offset;
  }
  return out;
}

std::string to_string(NormalizationRecord::Method m) {
  switch (m) {
    case NormalizationRecord::Method::none: return "none";
    case NormalizationRecord::Method::global_range: return "global_range";
    case NormalizationRecord::Method::global_max: return "global_max";
    case NormalizationRecord::Method::per_image_std: return "per_image_std";
  }
  return "?";
}

NormalizationRecord::Method parse_normalization(const std::string& s) {
  if (s == "none") return NormalizationRecord::Method::none;
  if (s == "global_range") return NormalizationRecord::Method::global_range;
  if (s == "global_max") return NormalizationRecord::Method::global_max;
  if (s == "per_image_std") return NormalizationRecord::Method::per_image_std;
  throw ConfigError("unknown normalization '" + s + "'");
}

NormalizationRecord fit_normalization(const Tensor& images, NormalizationRecord::Method m) {
  NormalizationRecord r;
  r.method = m;
  switch (m) {
    case NormalizationRecord::Method::none: break;
    case NormalizationRecord::Method::global_range: {
      const auto [lo, hi] = std::minmax_element(images.values().begin(), images.values().end());
      r.offset = *lo;
      r.scale = *hi > *lo ? *hi - *lo : 1.0;
      break;
    }
    case NormalizationRecord::Method::global_max: {
      const double m = images.abs_max();
      r.scale = m > 0.0 ? m : 1.0;
      break;
    }
    case NormalizationRecord::Method::per_image_std: {
      const Shape s = images.shape();
      for (int n = 0; n < s.n; ++n) {
        const double sd = magnitude_std(images.data() + n * s.sample(), s.c, s.plane());
        r.per_image.push_back(sd > 0.0 ? sd : 1.0);
      }
      break;
    }
  }
  return r;
}

std::string to_string(SyntheticSceneSpec::Kind k) {
  switch (k) {
    case SyntheticSceneSpec::Kind::phantom: return "phantom";
    case SyntheticSceneSpec::Kind::point_sources: return "point_sources";
    case SyntheticSceneSpec::Kind::textured_noise: return "textured_noise";
  }
  return "?";
}

SyntheticSceneSpec::Kind parse_scene_kind(const std::string& s) {
  if (s == "phantom") return SyntheticSceneSpec::Kind::phantom;
  if (s == "point_sources") return SyntheticSceneSpec::Kind::point_sources;
  if (s == "textured_noise") return SyntheticSceneSpec::Kind::textured_noise;
  throw ConfigError("unknown scene kind '" + s + "'");
}

namespace {

// Piecewise-smooth: a sum of ellipses, each carrying a gentle linear ramp.
void draw_phantom(const SyntheticSceneSpec& spec, Rng& rng, double* plane) {
  const int n = spec.size;
  std::uniform_int_distribution<int> count(spec.ellipses_min, spec.ellipses_max);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int k = count(rng);
  for (int e = 0; e < k; ++e) {
    const double cy = n * (0.2 + 0.6 * u(rng)), cx = n * (0.2 + 0.6 * u(rng));
    const double ay = n * (0.08 + 0.25 * u(rng)), ax = n * (0.08 + 0.25 * u(rng));
    const double th = std::numbers::pi * u(rng);
    const double level = 0.2 + 0.8 * u(rng);
    const double gy = 0.4 * (u(rng) - 0.5), gx = 0.4 * (u(rng) - 0.5);
    const double c = std::cos(th), s = std::sin(th);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double dy = i - cy, dx = j - cx;
        const double r1 = (c * dx + s * dy) / ax, r2 = (-s * dx + c * dy) / ay;
        if (r1 * r1 + r2 * r2 <= 1.0) plane[i * n + j] += level * (1.0 + gy * dy / ay + gx * dx / ax);
      }
  }
}

void draw_points(const SyntheticSceneSpec& spec, Rng& rng, double* plane) {
  const int n = spec.size;
  std::uniform_int_distribution<int> count(spec.sources_min, spec.sources_max), pos(0, n - 1);
  const int k = count(rng);
  for (int e = 0; e < k; ++e) {
    const int i = pos(rng), j = pos(rng);
    plane[i * n + j] += spec.amplitude;
  }
}

// Periodic separable Gaussian filter of white noise.
void draw_texture(const SyntheticSceneSpec& spec, Rng& rng, double* plane) {
  const int n = spec.size;
  std::normal_distribution<double> normal;
  std::vector<double> white(static_cast<std::size_t>(n) * n), tmp(white.size(), 0.0);
  for (auto& v : white) v = normal(rng);
  const int r = static_cast<int>(std::ceil(3.0 * spec.texture_sigma));
  std::vector<double> k(2 * r + 1);
  for (int t = -r; t <= r; ++t) k[t + r] = std::exp(-0.5 * t * t / (spec.texture_sigma * spec.texture_sigma));
  const double ks = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= ks;
  auto wrap = [n](int a) { return ((a % n) + n) % n; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int t = -r; t <= r; ++t) tmp[i * n + j] += k[t + r] * white[i * n + wrap(j + t)];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[wrap(i + t) * n + j];
      plane[i * n + j] = acc;
    }
}

}  // namespace

Tensor make_scene(const SyntheticSceneSpec& spec, Rng& rng) {
  if (spec.size < 1 || spec.channels < 1) throw ConfigError("scene size and channels must be positive");
  Tensor t(Shape{1, spec.channels, spec.size, spec.size});
  // Only the first (real) channel carries the scene.
  switch (spec.kind) {
    case SyntheticSceneSpec::Kind::phantom: draw_phantom(spec, rng, t.data()); break;
    case SyntheticSceneSpec::Kind::point_sources: draw_points(spec, rng, t.data()); break;
    case SyntheticSceneSpec::Kind::textured_noise: draw_texture(spec, rng, t.data()); break;
  }
  return t;
}

Tensor make_noise(const NoiseSpec& spec, const Shape& shape, Rng& rng) {
  Tensor w(shape);
  std::normal_distribution<double> normal;
  if (spec.sigma > 0.0)
    for (auto& v : w.values()) v = spec.sigma * normal(rng);
  if (spec.model == NoiseSpec::Model::mixed_streak) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t plane = shape.plane();
    for (int n = 0; n < shape.n; ++n)
      for (int c = 0; c < shape.c; ++c) {
        double* p = w.data() + (static_cast<std::size_t>(n) * shape.c + c) * plane;
        // Streaks share one dominant direction per image, jittered per streak.
        const double base = std::numbers::pi * u(rng);
        for (int s = 0; s < spec.streaks; ++s) {
          const double th = base + 0.15 * (u(rng) - 0.5);
          const double oy = shape.h * u(rng), ox = shape.w * u(rng);
          const double amp = spec.streak_amplitude * (u(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + u(rng));
          const double ny = std::cos(th), nx = -std::sin(th);
          for (int i = 0; i < shape.h; ++i)
            for (int j = 0; j < shape.w; ++j) {
              const double d = (i - oy) * ny + (j - ox) * nx;
              p[static_cast<std::size_t>(i) * shape.w + j] +=
                  amp * std::exp(-0.5 * d * d / (spec.streak_width * spec.streak_width));
            }
        }
      }
  }
  return w;
}

Tensor measure(const physics::ForwardOperator& op, const Tensor& truth, const NoiseSpec& noise, Rng& rng) {
  const Tensor clean = physics::apply(op, truth);
  Tensor w = make_noise(noise, clean.shape(), rng);
  const auto* known = std::get_if<physics::KnownLinearOperator>(&op);
  if (known && known->kind() == physics::KnownLinearOperator::Kind::fourier_subsample) w = known->apply(w);
  Tensor y = clean;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += w[i];
  return y;
}

namespace {

Tensor permuted(const Tensor& t, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(t.shape().n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Tensor out(t.shape());
  const std::size_t per = t.shape().sample();
  for (std::size_t k = 0; k < order.size(); ++k)
    std::copy_n(t.data() + per * order[k], per, out.data() + per * k);
  return out;
}

}  // namespace

SyntheticData generate(const SyntheticSceneSpec& spec, const physics::ForwardOperator& op, std::uint64_t seed) {
  if (spec.count < 1) throw ConfigError("data.count must be >= 1");
  if (spec.test_count < 0) throw ConfigError("data.test_count must be >= 0");
  Rng scene_rng(derive_seed(seed, "scenes"));
  Rng noise_rng(derive_seed(seed, "noise"));
  Rng repeat_rng(derive_seed(seed, "noise-repeat"));
  const int total = spec.count + spec.test_count;
  std::vector<Tensor> truth, meas;
  truth.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) truth.push_back(make_scene(spec, scene_rng));
  const auto observe = [&](const Tensor& x, Rng& rng) {
    Tensor y = measure(op, x, spec.noise, rng);
    if (spec.upsample > 1) y = upsample(downsample(y, spec.upsample), spec.upsample, spec.interp);
    return y;
  };
  std::vector<Tensor> repeat;
  for (int i = 0; i < total; ++i) meas.push_back(observe(truth[static_cast<std::size_t>(i)], noise_rng));
  for (int i = spec.count; i < total; ++i) repeat.push_back(observe(truth[static_cast<std::size_t>(i)], repeat_rng));

  const auto split = [&](const std::vector<Tensor>& v, int first, int count) {
    return stack_batch(std::span<const Tensor>(v.data() + first, static_cast<std::size_t>(count)));
  };
  const Tensor train_x = split(truth, 0, spec.count), train_y = split(meas, 0, spec.count);

  SyntheticData out;
  Rng shuffle_x(derive_seed(seed, "shuffle-x")), shuffle_y(derive_seed(seed, "shuffle-y"));
  const auto make_pool = [&](const Tensor& images, Domain d, NormalizationRecord::Method m, Rng& shuffle) {
    ImagePool p;
    p.domain = d;
    p.seed = seed;
    const Tensor shuffled = permuted(images, shuffle);
    p.normalization = fit_normalization(shuffled, m);
    p.images = p.normalization.normalize(shuffled);
    return p;
  };
  out.x = make_pool(train_x, Domain::X, spec.normalization_x, shuffle_x);
  out.y = make_pool(train_y, Domain::Y, spec.normalization_y, shuffle_y);

  if (spec.test_count > 0) {
    const Tensor tx = split(truth, spec.count, spec.test_count), ty = split(meas, spec.count, spec.test_count);
    // Global records come from the training pools; per-image ones are refit.
    out.test.truth_normalization = spec.normalization_x == NormalizationRecord::Method::per_image_std
                                       ? fit_normalization(tx, spec.normalization_x)
                                       : out.x.normalization;
    out.test.measurement_normalization = spec.normalization_y == NormalizationRecord::Method::per_image_std
                                             ? fit_normalization(ty, spec.normalization_y)
                                             : out.y.normalization;
    out.test.truth = out.test.truth_normalization.normalize(tx);
    out.test.measurement = out.test.measurement_normalization.normalize(ty);
    // Per-image scales of the first draw are reused so both draws share units.
    out.test.measurement_repeat = out.test.measurement_normalization.normalize(stack_batch(repeat));
  }
  return out;
}

Tensor flip(const Tensor& images, Flip f) {
  const Shape s = images.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j)
          out.at(n, c, i, j) = f == Flip::h ? images.at(n, c, i, s.w - 1 - j) : images.at(n, c, s.h - 1 - i, j);
  return out;
}

Tensor augment(const Tensor& images, bool hflip, bool vflip) {
  std::vector<Tensor> parts{images};
  if (hflip) parts.push_back(flip(images, Flip::h));
  if (vflip) parts.push_back(flip(images, Flip::v));
  if (hflip && vflip) parts.push_back(flip(flip(images, Flip::h), Flip::v));
  const Shape s = images.shape();
  Tensor out(Shape{s.n * static_cast<int>(parts.size()), s.c, s.h, s.w});
  for (std::size_t k = 0; k < parts.size(); ++k)
    std::copy(parts[k].values().begin(), parts[k].values().end(), out.data() + k * s.numel());
  return out;
}

ImagePool augment(const ImagePool& pool, bool hflip, bool vflip) {
  ImagePool out = pool;
  out.images = augment(pool.images, hflip, vflip);
  if (!pool.normalization.per_image.empty()) {
    const int copies = out.images.shape().n / pool.images.shape().n;
    auto& v = out.normalization.per_image;
    v.clear();
    for (int k = 0; k < copies; ++k)
      v.insert(v.end(), pool.normalization.per_image.begin(), pool.normalization.per_image.end());
  }
  return out;
}

Patches extract_patches(const Tensor& images, int size, int stride) {
  const Shape s = images.shape();
  if (size < 1 || stride < 1) throw ConfigError("patch size and stride must be positive");
  if (size > s.h || size > s.w)
    throw ConfigError("patch size " + std::to_string(size) + " exceeds image " + std::to_string(s.h) + "x" +
                      std::to_string(s.w));
  auto starts = [&](int extent) {
    std::vector<int> v;
    for (int p = 0; p + size <= extent; p += stride) v.push_back(p);
    if (v.back() + size < extent) v.push_back(extent - size);
    return v;
  };
  Patches out;
  out.layout = {s.n, s.c, s.h, s.w, size, {}};
  const auto ys = starts(s.h), xs = starts(s.w);
  for (int n = 0; n < s.n; ++n)
    for (int y : ys)
      for (int x : xs) out.layout.origins.push_back({n, y, x});
  out.patches = Tensor(Shape{static_cast<int>(out.layout.origins.size()), s.c, size, size});
  for (std::size_t k = 0; k < out.layout.origins.size(); ++k) {
    const auto& o = out.layout.origins[k];
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
          out.patches.at(static_cast<int>(k), c, i, j) = images.at(o.image, c, o.y + i, o.x + j);
  }
  return out;
}

Tensor stitch(const Tensor& patches, const PatchLayout& l) {
  if (patches.shape().n != static_cast<int>(l.origins.size()) || patches.shape().h != l.size)
    throw DimensionError("stitch: patches do not match layout");
  const Shape s{l.images, l.channels, l.height, l.width};
  Tensor acc(s), hits(s);
  for (std::size_t k = 0; k < l.origins.size(); ++k) {
    const auto& o = l.origins[k];
    for (int c = 0; c < l.channels; ++c)
      for (int i = 0; i < l.size; ++i)
        for (int j = 0; j < l.size; ++j) {
          acc.at(o.image, c, o.y + i, o.x + j) += patches.at(static_cast<int>(k), c, i, j);
          hits.at(o.image, c, o.y + i, o.x + j) += 1.0;
        }
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (hits[i] > 0.0) acc[i] /= hits[i];
  return acc;
}

Tensor upsample(const Tensor& images, int factor, Interp mode) {
  if (factor < 1) throw ConfigError("upsampling factor must be >= 1");
  if (factor == 1) return images;
  const Shape s = images.shape();
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h * factor; ++i)
        for (int j = 0; j < s.w * factor; ++j) {
          if (mode == Interp::nearest) {
            out.at(n, c, i, j) = images.at(n, c, i / factor, j / factor);
            continue;
          }
          // Pixel centres: output (i + 0.5)/f - 0.5 in input coordinates, edge-clamped.
          const double y = std::clamp((i + 0.5) / factor - 0.5, 0.0, s.h - 1.0);
          const double x = std::clamp((j + 0.5) / factor - 0.5, 0.0, s.w - 1.0);
          const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
          const int y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
          const double fy = y - y0, fx = x - x0;
          out.at(n, c, i, j) = (1 - fy) * ((1 - fx) * images.at(n, c, y0, x0) + fx * images.at(n, c, y0, x1)) +
                               fy * ((1 - fx) * images.at(n, c, y1, x0) + fx * images.at(n, c, y1, x1));
        }
  return out;
}

Tensor downsample(const Tensor& images, int factor) {
  if (factor < 1) throw ConfigError("downsampling factor must be >= 1");
  const Shape s = images.shape();
  if (s.h % factor || s.w % factor) throw DimensionError("downsample: " + s.str() + " not divisible by factor");
  if (factor == 1) return images;
  Tensor out(Shape{s.n, s.c, s.h / factor, s.w / factor});
  const double inv = 1.0 / (factor * factor);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) out.at(n, c, i / factor, j / factor) += inv * images.at(n, c, i, j);
  return out;
}

BatchIterator::BatchIterator(Tensor pool, std::uint64_t seed) : pool_(std::move(pool)), rng_(seed) {
  if (pool_.shape().n < 1) throw ConfigError("batch iterator over an empty pool");
  order_.resize(static_cast<std::size_t>(pool_.shape().n));
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

Tensor BatchIterator::next(int batch) {
  if (batch < 1 || batch > pool_.shape().n) throw ConfigError("batch size must be in [1, pool size]");
  const Shape s = pool_.shape();
  Tensor out(Shape{batch, s.c, s.h, s.w});
  const std::size_t per = s.sample();
  for (int k = 0; k < batch; ++k) {
    if (pos_ == order_.size()) {
      ++passes_;
      reshuffle();
    }
    std::copy_n(pool_.data() + per * order_[pos_++], per, out.data() + per * k);
  }
  return out;
}

}  // namespace otcg::data
