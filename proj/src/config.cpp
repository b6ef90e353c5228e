#include "otcg/config.hpp"

#include <cstdio>
#include <set>

#include "otcg/errors.hpp"
#include "otcg/tensor_io.hpp"

namespace otcg::config {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const {
    throw ConfigError(where(key) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail("expected a boolean", key);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail("expected an integer", key);
      if constexpr (std::is_unsigned_v<T>)
        if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) fail("expected a nonnegative integer", key);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail("expected a number", key);
    } else {
      if (!v.is_string()) fail("expected a string", key);
    }
    return v.get<T>();
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail("unknown key", k);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E pick(Reader& r, const std::string& key, E fallback, std::initializer_list<std::pair<const char*, E>> options) {
  std::string current;
  for (const auto& [name, value] : options)
    if (value == fallback) current = name;
  const std::string s = r.get<std::string>(key, current);
  for (const auto& [name, value] : options)
    if (s == name) return value;
  std::string names;
  for (const auto& [name, value] : options) names += (names.empty() ? "" : ", ") + std::string(name);
  r.fail("'" + s + "' is not one of {" + names + "}", key);
}

template <typename E>
std::string name_of(E v, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options)
    if (value == v) return name;
  return "?";
}

#define OPTIONS(T, ...) std::initializer_list<std::pair<const char*, T>>{__VA_ARGS__}

const auto kNorm = OPTIONS(models::Norm, {"none", models::Norm::none}, {"instance", models::Norm::instance},
                           {"batch", models::Norm::batch});
const auto kBoundary =
    OPTIONS(physics::Boundary, {"periodic", physics::Boundary::periodic}, {"zero_pad", physics::Boundary::zero_pad});
const auto kForward = OPTIONS(ForwardSpec::Type, {"identity", ForwardSpec::Type::identity},
                              {"conv_kernel", ForwardSpec::Type::conv_kernel},
                              {"fourier_subsample", ForwardSpec::Type::fourier_subsample});
const auto kPattern = OPTIONS(physics::MaskSpec::Pattern, {"uniform_random_lines", physics::MaskSpec::Pattern::uniform_random_lines},
                              {"full", physics::MaskSpec::Pattern::full});
const auto kStyle = OPTIONS(models::DiscStyle, {"patch", models::DiscStyle::patch},
                            {"global_scalar", models::DiscStyle::global_scalar});
const auto kHead = OPTIONS(models::Head, {"linear", models::Head::linear}, {"sigmoid", models::Head::sigmoid});
const auto kLip = OPTIONS(models::LipschitzMode::Kind, {"clip", models::LipschitzMode::Kind::clip},
                          {"spectral_norm", models::LipschitzMode::Kind::spectral_norm},
                          {"gradient_penalty", models::LipschitzMode::Kind::gradient_penalty});
const auto kKernelInit =
    OPTIONS(KernelSpec::Init, {"delta", KernelSpec::Init::delta}, {"gaussian", KernelSpec::Init::gaussian});
const auto kProjection = OPTIONS(KernelSpec::Projection, {"none", KernelSpec::Projection::none},
                                 {"nonnegative", KernelSpec::Projection::nonnegative},
                                 {"simplex", KernelSpec::Projection::simplex});
const auto kForwardKind = OPTIONS(OptimizerConfig::ForwardKind, {"adam", OptimizerConfig::ForwardKind::adam},
                                  {"normalized", OptimizerConfig::ForwardKind::normalized});
const auto kMass = OPTIONS(KernelSpec::Mass, {"unit", KernelSpec::Mass::unit}, {"data", KernelSpec::Mass::data});
const auto kScene = OPTIONS(data::SyntheticSceneSpec::Kind, {"phantom", data::SyntheticSceneSpec::Kind::phantom},
                            {"point_sources", data::SyntheticSceneSpec::Kind::point_sources},
                            {"textured_noise", data::SyntheticSceneSpec::Kind::textured_noise});
const auto kNoise = OPTIONS(data::NoiseSpec::Model, {"gaussian", data::NoiseSpec::Model::gaussian},
                            {"mixed_streak", data::NoiseSpec::Model::mixed_streak});
const auto kNormalization =
    OPTIONS(data::NormalizationRecord::Method, {"none", data::NormalizationRecord::Method::none},
            {"global_range", data::NormalizationRecord::Method::global_range},
            {"global_max", data::NormalizationRecord::Method::global_max},
            {"per_image_std", data::NormalizationRecord::Method::per_image_std});
const auto kInterp = OPTIONS(data::Interp, {"nearest", data::Interp::nearest}, {"bilinear", data::Interp::bilinear});
const auto kVariant =
    OPTIONS(losses::VariantId, {"a", losses::VariantId::standard_a}, {"b", losses::VariantId::linear_b},
            {"c", losses::VariantId::known_c}, {"d", losses::VariantId::unknown_d});

#undef OPTIONS

void positive(Reader& r, const std::string& key, double v) {
  if (!(v > 0.0)) r.fail("must be > 0", key);
}
void at_least(Reader& r, const std::string& key, long v, long lo) {
  if (v < lo) r.fail("must be >= " + std::to_string(lo), key);
}

models::GeneratorSpec read_generator(Reader r, models::GeneratorSpec g) {
  g.depth = r.get("depth", g.depth);
  g.base_channels = r.get("base_channels", g.base_channels);
  g.norm = pick(r, "norm", g.norm, kNorm);
  g.residual = r.get("residual", g.residual);
  g.zero_init_head = r.get("zero_init_head", g.zero_init_head);
  g.leaky_slope = r.get("leaky_slope", g.leaky_slope);
  at_least(r, "depth", g.depth, 0);
  at_least(r, "base_channels", g.base_channels, 1);
  r.finish();
  return g;
}

json write_generator(const models::GeneratorSpec& g) {
  return {{"depth", g.depth},
          {"base_channels", g.base_channels},
          {"norm", name_of(g.norm, kNorm)},
          {"residual", g.residual},
          {"zero_init_head", g.zero_init_head},
          {"leaky_slope", g.leaky_slope}};
}

models::DiscriminatorSpec read_discriminator(Reader r, models::DiscriminatorSpec d) {
  d.style = pick(r, "style", d.style, kStyle);
  d.blocks = r.get("blocks", d.blocks);
  d.base_channels = r.get("base_channels", d.base_channels);
  d.kernel = r.get("kernel", d.kernel);
  d.stride = r.get("stride", d.stride);
  d.head = pick(r, "head", d.head, kHead);
  d.norm = pick(r, "norm", d.norm, kNorm);
  d.leaky_slope = r.get("leaky_slope", d.leaky_slope);
  at_least(r, "blocks", d.blocks, 1);
  at_least(r, "base_channels", d.base_channels, 1);
  at_least(r, "kernel", d.kernel, 1);
  at_least(r, "stride", d.stride, 1);
  if (d.norm == models::Norm::batch) r.fail("batch norm is not supported in discriminators", "norm");
  r.finish();
  return d;
}

json write_discriminator(const models::DiscriminatorSpec& d) {
  return {{"style", name_of(d.style, kStyle)}, {"blocks", d.blocks},       {"base_channels", d.base_channels},
          {"kernel", d.kernel},                {"stride", d.stride},       {"head", name_of(d.head, kHead)},
          {"norm", name_of(d.norm, kNorm)},    {"leaky_slope", d.leaky_slope}};
}

}  // namespace

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");
  c.name = root.get("name", c.name);
  c.variant = pick(root, "variant", c.variant, kVariant);
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.gamma = root.get("gamma", c.gamma);
  c.eta = root.get("eta", c.eta);
  c.checkpoint_every = root.get("checkpoint_every", c.checkpoint_every);
  if (c.gamma < 0.0) root.fail("must be >= 0", "gamma");
  if (c.eta < 0.0) root.fail("must be >= 0", "eta");
  at_least(root, "checkpoint_every", c.checkpoint_every, 0);

  {
    Reader r = root.child("data");
    auto& s = c.data.scene;
    s.kind = pick(r, "kind", s.kind, kScene);
    s.size = r.get("size", s.size);
    s.count = r.get("count", s.count);
    s.test_count = r.get("test_count", s.test_count);
    s.channels = r.get("channels", s.channels);
    s.sources_min = r.get("sources_min", s.sources_min);
    s.sources_max = r.get("sources_max", s.sources_max);
    s.amplitude = r.get("amplitude", s.amplitude);
    s.ellipses_min = r.get("ellipses_min", s.ellipses_min);
    s.ellipses_max = r.get("ellipses_max", s.ellipses_max);
    s.texture_sigma = r.get("texture_sigma", s.texture_sigma);
    s.normalization_x = pick(r, "normalization_x", s.normalization_x, kNormalization);
    s.normalization_y = pick(r, "normalization_y", s.normalization_y, kNormalization);
    c.data.hflip = r.get("hflip", c.data.hflip);
    c.data.vflip = r.get("vflip", c.data.vflip);
    s.upsample = r.get("upsample", s.upsample);
    s.interp = pick(r, "interp", s.interp, kInterp);
    {
      Reader n = r.child("noise");
      s.noise.model = pick(n, "model", s.noise.model, kNoise);
      s.noise.sigma = n.get("sigma", s.noise.sigma);
      s.noise.streaks = n.get("streaks", s.noise.streaks);
      s.noise.streak_amplitude = n.get("streak_amplitude", s.noise.streak_amplitude);
      s.noise.streak_width = n.get("streak_width", s.noise.streak_width);
      if (s.noise.sigma < 0.0) n.fail("must be >= 0", "sigma");
      at_least(n, "streaks", s.noise.streaks, 0);
      positive(n, "streak_width", s.noise.streak_width);
      n.finish();
    }
    at_least(r, "size", s.size, 1);
    at_least(r, "count", s.count, 1);
    at_least(r, "test_count", s.test_count, 0);
    if (s.channels != 1 && s.channels != 2) r.fail("must be 1 or 2", "channels");
    at_least(r, "sources_min", s.sources_min, 0);
    if (s.sources_max < s.sources_min) r.fail("must be >= sources_min", "sources_max");
    at_least(r, "ellipses_min", s.ellipses_min, 0);
    if (s.ellipses_max < s.ellipses_min) r.fail("must be >= ellipses_min", "ellipses_max");
    positive(r, "texture_sigma", s.texture_sigma);
    at_least(r, "upsample", s.upsample, 1);
    if (s.size % s.upsample) r.fail("must divide data.size", "upsample");
    r.finish();
  }
  {
    Reader r = root.child("forward");
    auto& f = c.forward;
    f.type = pick(r, "type", f.type, kForward);
    f.kernel_size = r.get("kernel_size", f.kernel_size);
    f.psf_sigma = r.get("psf_sigma", f.psf_sigma);
    f.boundary = pick(r, "boundary", f.boundary, kBoundary);
    f.mask.acceleration = r.get("acceleration", f.mask.acceleration);
    f.mask.acs_fraction = r.get("acs_fraction", f.mask.acs_fraction);
    f.mask.pattern = pick(r, "pattern", f.mask.pattern, kPattern);
    at_least(r, "kernel_size", f.kernel_size, 1);
    positive(r, "psf_sigma", f.psf_sigma);
    at_least(r, "acceleration", f.mask.acceleration, 1);
    if (!(f.mask.acs_fraction >= 0.0 && f.mask.acs_fraction <= 1.0)) r.fail("must be in [0, 1]", "acs_fraction");
    r.finish();
  }
  {
    Reader r = root.child("model");
    c.model.generator = read_generator(r.child("generator"), c.model.generator);
    c.model.backward = read_generator(r.child("backward"), c.model.backward);
    c.model.phi = read_discriminator(r.child("phi"), c.model.phi);
    c.model.psi = read_discriminator(r.child("psi"), c.model.psi);
    Reader k = r.child("kernel");
    auto& ks = c.model.kernel;
    ks.size = k.get("size", ks.size);
    ks.init = pick(k, "init", ks.init, kKernelInit);
    ks.init_sigma = k.get("init_sigma", ks.init_sigma);
    ks.projection = pick(k, "projection", ks.projection, kProjection);
    ks.mass = pick(k, "mass", ks.mass, kMass);
    ks.boundary = pick(k, "boundary", ks.boundary, kBoundary);
    at_least(k, "size", ks.size, 1);
    positive(k, "init_sigma", ks.init_sigma);
    k.finish();
    r.finish();
  }
  {
    Reader r = root.child("optimizer");
    auto& o = c.optimizer;
    const std::string kind = r.get<std::string>("kind", "adam");
    if (kind != "adam") r.fail("only 'adam' is supported", "kind");
    o.lr = r.get("lr", o.lr);
    o.lr_forward = r.get("lr_forward", o.lr_forward);
    o.forward_kind = pick(r, "forward_kind", o.forward_kind, kForwardKind);
    o.beta1 = r.get("beta1", o.beta1);
    o.beta2 = r.get("beta2", o.beta2);
    o.n_critic = r.get("n_critic", o.n_critic);
    o.batch_size = r.get("batch_size", o.batch_size);
    o.epochs = r.get("epochs", o.epochs);
    o.steps_per_epoch = r.get("steps_per_epoch", o.steps_per_epoch);
    o.decay_epochs = r.get("decay_epochs", o.decay_epochs);
    if (o.lr < 0.0) r.fail("must be >= 0", "lr");
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) r.fail("must be in [0, 1)", "beta1");
    if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) r.fail("must be in [0, 1)", "beta2");
    at_least(r, "n_critic", o.n_critic, 1);
    at_least(r, "batch_size", o.batch_size, 1);
    at_least(r, "epochs", o.epochs, 0);
    at_least(r, "steps_per_epoch", o.steps_per_epoch, 0);
    at_least(r, "decay_epochs", o.decay_epochs, 0);
    if (o.decay_epochs > o.epochs) r.fail("must be <= epochs", "decay_epochs");
    r.finish();
  }
  {
    Reader r = root.child("lipschitz");
    auto& l = c.lipschitz;
    l.kind = pick(r, "mode", l.kind, kLip);
    l.clip = r.get("clip", l.clip);
    l.power_iters = r.get("power_iters", l.power_iters);
    l.eta = c.eta;
    if (l.kind == models::LipschitzMode::Kind::clip) positive(r, "clip", l.clip);
    at_least(r, "power_iters", l.power_iters, 1);
    r.finish();
  }
  {
    Reader r = root.child("evaluation");
    c.evaluation.pixel_size = r.get("pixel_size", c.evaluation.pixel_size);
    c.evaluation.frc = r.get("frc", c.evaluation.frc);
    positive(r, "pixel_size", c.evaluation.pixel_size);
    r.finish();
  }
  root.finish();
  validate(c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.data.scene;
  const auto& f = c.forward;
  const auto& k = c.model.kernel;
  const auto& o = c.optimizer;
  json j;
  j["name"] = c.name;
  j["variant"] = name_of(c.variant, kVariant);
  j["seed"] = c.seed;
  j["gamma"] = c.gamma;
  j["eta"] = c.eta;
  j["checkpoint_every"] = c.checkpoint_every;
  j["data"] = {{"kind", name_of(s.kind, kScene)},
               {"size", s.size},
               {"count", s.count},
               {"test_count", s.test_count},
               {"channels", s.channels},
               {"sources_min", s.sources_min},
               {"sources_max", s.sources_max},
               {"amplitude", s.amplitude},
               {"ellipses_min", s.ellipses_min},
               {"ellipses_max", s.ellipses_max},
               {"texture_sigma", s.texture_sigma},
               {"normalization_x", name_of(s.normalization_x, kNormalization)},
               {"normalization_y", name_of(s.normalization_y, kNormalization)},
               {"hflip", c.data.hflip},
               {"vflip", c.data.vflip},
               {"upsample", s.upsample},
               {"interp", name_of(s.interp, kInterp)},
               {"noise",
                {{"model", name_of(s.noise.model, kNoise)},
                 {"sigma", s.noise.sigma},
                 {"streaks", s.noise.streaks},
                 {"streak_amplitude", s.noise.streak_amplitude},
                 {"streak_width", s.noise.streak_width}}}};
  j["forward"] = {{"type", name_of(f.type, kForward)},
                  {"kernel_size", f.kernel_size},
                  {"psf_sigma", f.psf_sigma},
                  {"boundary", name_of(f.boundary, kBoundary)},
                  {"acceleration", f.mask.acceleration},
                  {"acs_fraction", f.mask.acs_fraction},
                  {"pattern", name_of(f.mask.pattern, kPattern)}};
  j["model"] = {{"generator", write_generator(c.model.generator)},
                {"backward", write_generator(c.model.backward)},
                {"phi", write_discriminator(c.model.phi)},
                {"psi", write_discriminator(c.model.psi)},
                {"kernel",
                 {{"size", k.size},
                  {"init", name_of(k.init, kKernelInit)},
                  {"init_sigma", k.init_sigma},
                  {"projection", name_of(k.projection, kProjection)},
                  {"mass", name_of(k.mass, kMass)},
                  {"boundary", name_of(k.boundary, kBoundary)}}}};
  j["optimizer"] = {{"kind", "adam"},          {"lr", o.lr},
                    {"lr_forward", o.lr_forward}, {"forward_kind", name_of(o.forward_kind, kForwardKind)},
                    {"beta1", o.beta1},
                    {"beta2", o.beta2},        {"n_critic", o.n_critic},
                    {"batch_size", o.batch_size}, {"epochs", o.epochs},
                    {"steps_per_epoch", o.steps_per_epoch}, {"decay_epochs", o.decay_epochs}};
  j["lipschitz"] = {{"mode", name_of(c.lipschitz.kind, kLip)},
                    {"clip", c.lipschitz.clip},
                    {"power_iters", c.lipschitz.power_iters}};
  j["evaluation"] = {{"pixel_size", c.evaluation.pixel_size}, {"frc", c.evaluation.frc}};
  return j;
}

ExperimentConfig load(const std::filesystem::path& path) {
  try {
    return from_json(io::read_json(path));
  } catch (const FileError& e) {
    throw ConfigError(e.what());
  }
}

void validate(const ExperimentConfig& c) {
  using losses::VariantId;
  const auto& s = c.data.scene;
  const int size = s.size;
  if (c.variant == VariantId::known_c && c.forward.type == ForwardSpec::Type::conv_kernel)
    throw ConfigError("variant: c needs a known linear operator (forward.type fourier_subsample or identity)");
  if (c.variant == VariantId::linear_b && c.forward.type == ForwardSpec::Type::fourier_subsample)
    throw ConfigError("variant: b learns a convolution kernel; forward.type fourier_subsample is not compatible");
  if (c.forward.type == ForwardSpec::Type::fourier_subsample && s.channels != 2)
    throw ConfigError("data.channels: fourier_subsample works on (real, imaginary) images, set 2");
  if (c.forward.type == ForwardSpec::Type::fourier_subsample && s.upsample != 1)
    throw ConfigError("data.upsample: k-space data cannot be upsampled");
  if (c.variant == VariantId::known_c && s.upsample != 1)
    throw ConfigError("data.upsample: variant c applies the known operator at data resolution");
  if (c.model.kernel.size > size) throw ConfigError("model.kernel.size: larger than the image");
  if (c.optimizer.batch_size > s.count) throw ConfigError("optimizer.batch_size: larger than data.count");
  for (const auto* d : {&c.model.phi, &c.model.psi}) {
    int h = size;
    for (int b = 0; b < d->blocks; ++b) {
      const int pad = (d->kernel - d->stride + 1) / 2;
      h = (h + 2 * pad - d->kernel) / d->stride + 1;
      if (h < 1) throw ConfigError("model.phi/psi: too many blocks for a " + std::to_string(size) + " pixel input");
    }
  }
  const bool sigmoid = c.model.phi.head == models::Head::sigmoid || c.model.psi.head == models::Head::sigmoid;
  if (c.variant == VariantId::standard_a && !sigmoid)
    throw ConfigError("model.phi.head: variant a needs sigmoid heads");
  if (c.variant != VariantId::standard_a && sigmoid)
    throw ConfigError("model.phi.head: Wasserstein variants need linear heads");
}

std::string hash(const ExperimentConfig& c) {
  const std::string dump = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

physics::ForwardOperator build_forward(const ForwardSpec& f, int size, int channels, std::uint64_t mask_seed) {
  switch (f.type) {
    case ForwardSpec::Type::identity:
      return physics::KnownLinearOperator::identity(Shape{1, channels, size, size});
    case ForwardSpec::Type::conv_kernel:
      return physics::LearnableConvKernel(physics::gaussian_kernel(f.kernel_size, f.psf_sigma), f.boundary);
    case ForwardSpec::Type::fourier_subsample:
      return physics::KnownLinearOperator::fourier_subsample(physics::make_mask(f.mask, size, size, mask_seed));
  }
  throw ConfigError("forward.type: unsupported");
}

}  // namespace otcg::config
