#include "otcg/models.hpp"

#include <cmath>
#include <memory>

#include "otcg/errors.hpp"

namespace otcg::models {

using ad::Var;

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Pads bottom/right by reflection up to (h2, w2).
std::shared_ptr<kernels::PlaneMap> reflect_pad_map(int h, int w, int h2, int w2) {
  auto m = std::make_shared<kernels::PlaneMap>();
  m->in_h = h, m->in_w = w, m->out_h = h2, m->out_w = w2;
  m->index.resize(static_cast<std::size_t>(h2) * w2);
  for (int i = 0; i < h2; ++i)
    for (int j = 0; j < w2; ++j) m->index[i * w2 + j] = reflect_index(i, h) * w + reflect_index(j, w);
  return m;
}

std::shared_ptr<kernels::PlaneMap> crop_map(int h, int w, int h2, int w2) {
  auto m = std::make_shared<kernels::PlaneMap>();
  m->in_h = h, m->in_w = w, m->out_h = h2, m->out_w = w2;
  m->index.resize(static_cast<std::size_t>(h2) * w2);
  for (int i = 0; i < h2; ++i)
    for (int j = 0; j < w2; ++j) m->index[i * w2 + j] = i * w + j;
  return m;
}

Var add_bias(const Var& x, const Var& b) { return ad::add(x, b); }

double tensor_norm(const Tensor& t) { return norm2(t); }

}  // namespace

std::vector<Var> Module::vars() const {
  std::vector<Var> v;
  v.reserve(params_.size());
  for (const auto& p : params_) v.push_back(p.var);
  return v;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

std::size_t Module::add_param(std::string name, Tensor init) {
  params_.push_back({std::move(name), Var(std::move(init), true)});
  return params_.size() - 1;
}

std::size_t Module::add_conv(const std::string& name, int in_c, int out_c, int k, Rng& rng) {
  Tensor w(Shape{out_c, in_c, k, k});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (static_cast<double>(in_c) * k * k)));
  for (auto& v : w.storage()) v = dist(rng);
  const std::size_t wi = add_param(name + ".weight", std::move(w));
  add_param(name + ".bias", Tensor(Shape{1, out_c, 1, 1}));
  return wi;
}

Var instance_norm(const Var& x, double eps) {
  const Shape s = x.shape();
  const Shape stat{s.n, s.c, 1, 1};
  const double inv = 1.0 / static_cast<double>(s.plane());
  Var centered = ad::sub(x, ad::scale(ad::reduce_to(x, stat), inv));
  Var var = ad::scale(ad::reduce_to(ad::square(centered), stat), inv);
  return ad::div(centered, ad::sqrt(ad::add_scalar(var, eps)));
}

// ---------------------------------------------------------------- Generator

Generator::Generator(GeneratorSpec spec, std::uint64_t seed) : spec_(spec) {
  if (spec.depth < 0 || spec.base_channels < 1 || spec.in_channels < 1 || spec.out_channels < 1)
    throw ConfigError("generator: depth, channel counts must be positive");
  if (spec.residual && spec.in_channels != spec.out_channels)
    throw ConfigError("generator: residual output needs in_channels == out_channels (" +
                      std::to_string(spec.in_channels) + " vs " + std::to_string(spec.out_channels) + ")");
  Rng rng(seed);
  auto channels = [&](int level) { return spec.base_channels << level; };
  int in = spec.in_channels;
  for (int l = 0; l <= spec.depth; ++l) {
    const std::string stage = "enc" + std::to_string(l);
    enc_.push_back({add_conv(stage + ".conv0", in, channels(l), 3, rng), 0, channels(l)});
    enc_.push_back({add_conv(stage + ".conv1", channels(l), channels(l), 3, rng), 0, channels(l)});
    in = channels(l);
  }
  for (int l = spec.depth - 1; l >= 0; --l) {
    const std::string stage = "dec" + std::to_string(l);
    dec_up_.push_back({add_conv(stage + ".up", channels(l + 1), channels(l), 3, rng), 0, channels(l)});
    dec_.push_back({add_conv(stage + ".conv0", 2 * channels(l), channels(l), 3, rng), 0, channels(l)});
    dec_.push_back({add_conv(stage + ".conv1", channels(l), channels(l), 3, rng), 0, channels(l)});
  }
  head_ = {add_conv("head", channels(0), spec.out_channels, 1, rng), 0, spec.out_channels};
  for (auto* units : {&enc_, &dec_up_, &dec_})
    for (auto& u : *units) u.bias = u.weight + 1;
  head_.bias = head_.weight + 1;
  if (spec.zero_init_head) {
    params()[head_.weight].var.mutable_value() = Tensor(p(head_.weight).shape());
  }
  const std::size_t slots = enc_.size() + dec_up_.size() + dec_.size();
  for (std::size_t i = 0; i < slots; ++i) {
    running_mean_.emplace_back();
    running_var_.emplace_back();
  }
}

Var Generator::normalize(const Var& x, Mode mode, std::size_t slot) {
  switch (spec_.norm) {
    case Norm::none:
      return x;
    case Norm::instance:
      return instance_norm(x);
    case Norm::batch: {
      const Shape s = x.shape();
      const Shape stat{1, s.c, 1, 1};
      constexpr double eps = 1e-5, momentum = 0.1;
      if (mode == Mode::eval && !running_mean_[slot].empty()) {
        Var centered = ad::sub(x, ad::constant(running_mean_[slot]));
        Tensor rstd = running_var_[slot];
        for (auto& v : rstd.storage()) v = 1.0 / std::sqrt(v + eps);
        return ad::mul(centered, ad::constant(std::move(rstd)));
      }
      const double inv = 1.0 / static_cast<double>(s.n * s.plane());
      Var m = ad::scale(ad::reduce_to(x, stat), inv);
      Var centered = ad::sub(x, m);
      Var var = ad::scale(ad::reduce_to(ad::square(centered), stat), inv);
      if (mode == Mode::train) {
        if (running_mean_[slot].empty()) {
          running_mean_[slot] = m.value();
          running_var_[slot] = var.value();
        } else {
          for (std::size_t i = 0; i < m.value().size(); ++i) {
            running_mean_[slot][i] = (1 - momentum) * running_mean_[slot][i] + momentum * m.value()[i];
            running_var_[slot][i] = (1 - momentum) * running_var_[slot][i] + momentum * var.value()[i];
          }
        }
      }
      return ad::div(centered, ad::sqrt(ad::add_scalar(var, eps)));
    }
  }
  return x;
}

Var Generator::unit(const Var& x, const ConvUnit& u, Mode mode, std::size_t norm_slot, bool act) {
  Var y = add_bias(ad::conv2d(x, p(u.weight), {1, 1}), p(u.bias));
  y = normalize(y, mode, norm_slot);
  return act ? ad::leaky_relu(y, spec_.leaky_slope) : y;
}

Var Generator::forward(const Var& input, Mode mode) {
  const Shape s = input.shape();
  if (s.c != spec_.in_channels)
    throw DimensionError("generator expects " + std::to_string(spec_.in_channels) + " channels, got " + s.str());
  const int mult = 1 << spec_.depth;
  const int h2 = (s.h + mult - 1) / mult * mult, w2 = (s.w + mult - 1) / mult * mult;
  Var x = input;
  if (h2 != s.h || w2 != s.w) x = ad::gather(x, reflect_pad_map(s.h, s.w, h2, w2));

  std::size_t slot = 0;
  std::vector<Var> skips;
  Var f = x;
  for (int l = 0; l <= spec_.depth; ++l) {
    f = unit(f, enc_[2 * l], mode, slot++);
    f = unit(f, enc_[2 * l + 1], mode, slot++);
    if (l < spec_.depth) {
      skips.push_back(f);
      f = ad::avg_pool2(f);
    }
  }
  for (int k = 0; k < spec_.depth; ++k) {
    f = unit(ad::upsample2(f), dec_up_[k], mode, slot++);
    f = ad::concat_channels(f, skips[spec_.depth - 1 - k]);
    f = unit(f, dec_[2 * k], mode, slot++);
    f = unit(f, dec_[2 * k + 1], mode, slot++);
  }
  Var out = add_bias(ad::conv2d(f, p(head_.weight), {1, 0}), p(head_.bias));
  if (spec_.residual) out = ad::add(out, x);
  if (h2 != s.h || w2 != s.w) out = ad::gather(out, crop_map(h2, w2, s.h, s.w));
  return out;
}

Tensor Generator::operator()(const Tensor& x) {
  ad::NoGradGuard guard;
  return forward(ad::constant(x), Mode::eval).value();
}

// ------------------------------------------------------------ Discriminator

Discriminator::Discriminator(DiscriminatorSpec spec, std::uint64_t seed) : spec_(spec) {
  if (spec.blocks < 1 || spec.base_channels < 1 || spec.in_channels < 1 || spec.kernel < 1 || spec.stride < 1)
    throw ConfigError("discriminator: blocks, channels, kernel and stride must be positive");
  if (spec.norm == Norm::batch)
    throw ConfigError("discriminator: batch norm couples samples and is not supported in critics");
  Rng rng(seed);
  const kernels::ConvGeometry geo{spec.stride, (spec.kernel - spec.stride + 1) / 2};
  int in = spec.in_channels, h = spec.input_h, w = spec.input_w;
  for (int b = 0; b < spec.blocks; ++b) {
    const int out = spec.base_channels << b;
    const std::size_t wi = add_conv("block" + std::to_string(b), in, out, spec.kernel, rng);
    blocks_.emplace_back(wi, wi + 1);
    register_layer({wi, geo, in, h, w});
    h = kernels::conv_out_size(h, spec.kernel, geo);
    w = kernels::conv_out_size(w, spec.kernel, geo);
    if (h < 1 || w < 1)
      throw ConfigError("discriminator: input " + std::to_string(spec.input_h) + "x" +
                        std::to_string(spec.input_w) + " too small for " + std::to_string(spec.blocks) + " blocks");
    in = out;
  }
  if (spec.style == DiscStyle::patch) {
    out_w_ = add_conv("out", in, 1, 3, rng);
    register_layer({out_w_, {1, 1}, in, h, w});
  } else {
    const int flat = in * h * w;
    out_w_ = add_conv("out", flat, 1, 1, rng);
    register_layer({out_w_, {1, 0}, flat, 1, 1});
  }
  out_b_ = out_w_ + 1;
  power_vectors_.resize(linear_layers().size());
}

Var Discriminator::forward_map(const Var& x) const {
  if (x.shape().c != spec_.in_channels)
    throw DimensionError("discriminator expects " + std::to_string(spec_.in_channels) + " channels, got " +
                         x.shape().str());
  if (spec_.style == DiscStyle::global_scalar && (x.shape().h != spec_.input_h || x.shape().w != spec_.input_w))
    throw DimensionError("global discriminator built for " + std::to_string(spec_.input_h) + "x" +
                         std::to_string(spec_.input_w) + ", got " + x.shape().str());
  const kernels::ConvGeometry geo{spec_.stride, (spec_.kernel - spec_.stride + 1) / 2};
  Var f = x;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    f = add_bias(ad::conv2d(f, p(blocks_[b].first), geo), p(blocks_[b].second));
    if (b > 0 && norm_enabled_ && spec_.norm == Norm::instance) f = instance_norm(f);
    f = ad::leaky_relu(f, spec_.leaky_slope);
  }
  Var out;
  if (spec_.style == DiscStyle::patch) {
    out = add_bias(ad::conv2d(f, p(out_w_), {1, 1}), p(out_b_));
  } else {
    const Shape s = f.shape();
    f = ad::reshape(f, Shape{s.n, static_cast<int>(s.sample()), 1, 1});
    out = add_bias(ad::conv2d(f, p(out_w_), {1, 0}), p(out_b_));
  }
  return spec_.head == Head::sigmoid ? ad::sigmoid(out) : out;
}

Var Discriminator::potential(const Var& x) const { return ad::mean_per_sample(forward_map(x)); }

Tensor Discriminator::operator()(const Tensor& x) const {
  ad::NoGradGuard guard;
  return potential(ad::constant(x)).value();
}

// ------------------------------------------------------ Lipschitz control

double power_iteration(const Eigen::MatrixXd& a, int iters, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> dist;
  Eigen::VectorXd v(a.cols());
  for (auto& x : v) x = dist(rng);
  v.normalize();
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXd next = a.transpose() * (a * v);
    const double n = next.norm();
    if (n == 0.0) return 0.0;
    v = next / n;
  }
  return (a * v).norm();
}

double conv_operator_norm(const Tensor& weight, const LinearLayer& layer, int iters, Tensor& u) {
  const Shape in{1, layer.in_c, layer.in_h, layer.in_w};
  if (u.shape() != in) {
    u = Tensor(in);
    Rng rng(0x5eed);
    std::normal_distribution<double> dist;
    for (auto& v : u.storage()) v = dist(rng);
  }
  double n = tensor_norm(u);
  if (n == 0.0) return 0.0;
  for (auto& v : u.storage()) v /= n;
  for (int k = 0; k < iters; ++k) {
    Tensor y = kernels::conv2d(u, weight, layer.geometry);
    Tensor back = kernels::conv2d_input_grad(y, weight, layer.geometry, layer.in_h, layer.in_w);
    n = tensor_norm(back);
    if (n == 0.0) return 0.0;
    for (std::size_t i = 0; i < back.size(); ++i) u[i] = back[i] / n;
  }
  return tensor_norm(kernels::conv2d(u, weight, layer.geometry));
}

Eigen::MatrixXd conv_operator_matrix(const Tensor& weight, const LinearLayer& layer) {
  const Shape in{1, layer.in_c, layer.in_h, layer.in_w};
  Tensor e(in);
  Eigen::MatrixXd m;
  for (std::size_t j = 0; j < in.numel(); ++j) {
    e[j] = 1.0;
    Tensor col = kernels::conv2d(e, weight, layer.geometry);
    if (m.size() == 0) m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(col.size()), static_cast<Eigen::Index>(in.numel()));
    for (std::size_t i = 0; i < col.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    e[j] = 0.0;
  }
  return m;
}

std::vector<double> enforce_lipschitz(Module& m, const LipschitzMode& mode, std::vector<Tensor>* power_vectors) {
  std::vector<double> norms;
  switch (mode.kind) {
    case LipschitzMode::Kind::gradient_penalty:
      break;
    case LipschitzMode::Kind::clip:
      for (auto& p : m.params())
        for (auto& v : p.var.mutable_value().storage()) v = std::clamp(v, -mode.clip, mode.clip);
      break;
    case LipschitzMode::Kind::spectral_norm: {
      const auto& layers = m.linear_layers();
      std::vector<Tensor> scratch(layers.size());
      std::vector<Tensor>& us = power_vectors ? *power_vectors : scratch;
      us.resize(layers.size());
      for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor& w = m.params()[layers[i].param].var.mutable_value();
        const double sigma = conv_operator_norm(w, layers[i], std::max(1, mode.power_iters), us[i]);
        norms.push_back(sigma);
        if (sigma > 0.0)
          for (auto& v : w.storage()) v /= sigma;
      }
      break;
    }
  }
  return norms;
}

}  // namespace otcg::models
