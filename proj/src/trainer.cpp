#include "otcg/trainer.hpp"

#include <sstream>

#include "otcg/errors.hpp"
#include "otcg/tensor_io.hpp"

namespace otcg::train {

using ad::Var;
using losses::VariantId;
namespace fs = std::filesystem;

losses::Map Components::g_map() const {
  auto g = G;
  return [g](const Var& y) { return g->forward(y); };
}

losses::ReturnPath Components::back() const {
  switch (variant) {
    case VariantId::standard_a: {
      auto f = F;
      return {losses::PathKind::network, [f](const Var& x) { return f->forward(x); }};
    }
    case VariantId::linear_b: {
      Var k = kernel;
      auto b = kernel_boundary;
      return {losses::PathKind::kernel,
              [k, b](const Var& x) { return physics::LearnableConvKernel::apply(x, k, b); }};
    }
    case VariantId::known_c: {
      auto op = *known;
      return {losses::PathKind::known_operator, [op](const Var& x) { return op.apply(x); }};
    }
    case VariantId::unknown_d: {
      physics::NeuralOperator op(F);
      return {losses::PathKind::neural_operator, [op](const Var& x) { return op.apply(x); }};
    }
  }
  throw ConfigError("unknown variant");
}

losses::Potential Components::phi_fn() const {
  auto d = phi;
  return [d](const Var& x) { return d->potential(x); };
}

losses::Potential Components::psi_fn() const {
  if (!psi) return {};
  auto d = psi;
  return [d](const Var& x) { return d->potential(x); };
}

std::vector<Var> Components::generator_vars() const { return G->vars(); }

std::vector<Var> Components::forward_vars() const {
  if (F) return F->vars();
  if (kernel.defined()) return {kernel};
  return {};
}

std::vector<Var> Components::critic_vars() const {
  std::vector<Var> v = phi->vars();
  if (psi) {
    auto p = psi->vars();
    v.insert(v.end(), p.begin(), p.end());
  }
  return v;
}

std::vector<ComponentInfo> Components::manifest() const {
  std::vector<ComponentInfo> m;
  m.push_back({"G", "generator", G->parameter_count()});
  if (F) m.push_back({variant == VariantId::unknown_d ? "H" : "F", "generator", F->parameter_count()});
  if (kernel.defined()) m.push_back({"kernel", "kernel", kernel.value().size()});
  m.push_back({"phi", "discriminator", phi->parameter_count()});
  if (psi) m.push_back({"psi", "discriminator", psi->parameter_count()});
  return m;
}

Components build_components(const config::ExperimentConfig& cfg, const physics::ForwardOperator& physics,
                            std::uint64_t init_seed) {
  config::validate(cfg);
  const int ch = cfg.data.scene.channels;
  const int size = cfg.data.scene.size;
  Components c;
  c.variant = cfg.variant;

  models::GeneratorSpec gs = cfg.model.generator;
  gs.in_channels = gs.out_channels = ch;
  c.G = std::make_shared<models::Generator>(gs, derive_seed(init_seed, "G"));

  const auto critic = [&](models::DiscriminatorSpec d, const char* tag) {
    d.in_channels = ch;
    d.input_h = d.input_w = size;
    auto net = std::make_shared<models::Discriminator>(d, derive_seed(init_seed, tag));
    if (cfg.lipschitz.kind == models::LipschitzMode::Kind::spectral_norm) net->set_norm_enabled(false);
    if (cfg.lipschitz.kind != models::LipschitzMode::Kind::gradient_penalty && cfg.variant != VariantId::standard_a)
      models::enforce_lipschitz(*net, cfg.lipschitz, &net->power_vectors());
    return net;
  };
  c.phi = critic(cfg.model.phi, "phi");
  if (losses::has_psi(cfg.variant)) c.psi = critic(cfg.model.psi, "psi");

  switch (cfg.variant) {
    case VariantId::standard_a:
    case VariantId::unknown_d: {
      models::GeneratorSpec fs = cfg.model.backward;
      fs.in_channels = fs.out_channels = ch;
      c.F = std::make_shared<models::Generator>(fs, derive_seed(init_seed, "F"));
      break;
    }
    case VariantId::linear_b: {
      const auto& k = cfg.model.kernel;
      Tensor init = k.init == config::KernelSpec::Init::delta ? physics::delta_kernel(k.size)
                                                                : physics::gaussian_kernel(k.size, k.init_sigma);
      c.kernel = Var(std::move(init), true);
      c.kernel_boundary = k.boundary;
      c.kernel_projection = k.projection;
      break;
    }
    case VariantId::known_c: {
      const auto* op = std::get_if<physics::KnownLinearOperator>(&physics);
      if (!op) throw ConfigError("variant c needs a known linear operator");
      c.known = *op;
      break;
    }
  }
  return c;
}

nlohmann::json to_json(const LogRecord& r) {
  return {{"step", r.step},
          {"cycle", r.losses.cycle},
          {"disc", r.losses.disc},
          {"gp", r.losses.gp},
          {"total_g", r.losses.total_generator},
          {"total_d", r.losses.total_discriminator}};
}

namespace {

Tensor at_least_one_batch(Tensor pool, int batch, const char* which) {
  if (pool.shape().n < batch)
    throw ConfigError(std::string("optimizer.batch_size: ") + which + " pool has " + std::to_string(pool.shape().n) +
                      " images, fewer than one batch of " + std::to_string(batch));
  return pool;
}

}  // namespace

Trainer::Trainer(const config::ExperimentConfig& cfg, Components comps, Tensor x_pool, Tensor y_pool,
                 SeedHierarchy seeds)
    : cfg_(cfg),
      comps_(std::move(comps)),
      x_iter_(at_least_one_batch(std::move(x_pool), cfg.optimizer.batch_size, "X"),
              derive_seed(seeds.training(), "x")),
      y_pool_size_(y_pool.shape().n),
      y_iter_(at_least_one_batch(std::move(y_pool), cfg.optimizer.batch_size, "Y"),
              derive_seed(seeds.training(), "y")),
      gp_rng_(seeds.gp()) {
  if (cfg_.model.kernel.mass == config::KernelSpec::Mass::data)
    calibrate_kernel_mass(comps_, x_iter_.pool(), y_iter_.pool());
  else if (comps_.kernel.defined())
    comps_.kernel_mass = comps_.kernel.value().sum();
  const auto& o = cfg_.optimizer;
  const optim::AdamConfig base{o.lr, o.beta1, o.beta2, 1e-8};
  optim::AdamConfig fwd = base;
  fwd.lr = o.forward_lr();
  opt_g_ = std::make_unique<optim::Adam>(comps_.generator_vars(), base);
  if (!comps_.forward_vars().empty()) {
    if (o.forward_kind == config::OptimizerConfig::ForwardKind::normalized)
      opt_f_ = std::make_unique<optim::NormalizedMomentum>(comps_.forward_vars(), fwd.lr, o.beta1);
    else
      opt_f_ = std::make_unique<optim::Adam>(comps_.forward_vars(), fwd);
  }
  opt_phi_ = std::make_unique<optim::Adam>(comps_.phi->vars(), base);
  if (comps_.psi) opt_psi_ = std::make_unique<optim::Adam>(comps_.psi->vars(), base);
}

int Trainer::steps_per_epoch() const {
  if (cfg_.optimizer.steps_per_epoch > 0) return cfg_.optimizer.steps_per_epoch;
  return std::max(1, y_pool_size_ / cfg_.optimizer.batch_size);
}

void Trainer::check_finite(const losses::LossBundle& b, const char* phase) const {
  if (b.finite()) return;
  std::ostringstream os;
  os.precision(17);
  os << "non-finite loss in " << phase << " at generator step " << step_ << ": cycle=" << b.cycle
     << " disc=" << b.disc << " gp=" << b.gp;
  throw NumericalError(os.str());
}

namespace {

void apply_grads(optim::Optimizer* opt, const std::vector<Var>& grads, std::size_t first, std::size_t count) {
  if (!opt) return;
  std::vector<Tensor> g;
  g.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) g.push_back(grads[i].value());
  opt->step(g);
}

}  // namespace

losses::LossBundle Trainer::discriminator_step(const Tensor& x, const Tensor& y) {
  const auto back = comps_.back();
  Tensor g_y, back_x;
  {
    ad::NoGradGuard no_grad;
    g_y = comps_.G->forward(Var(y)).value();
    back_x = back.map(Var(x)).value();
  }
  const Var xv(x), yv(y), gyv(g_y), bxv(back_x);
  const auto phi = comps_.phi_fn();
  const auto psi = comps_.psi_fn();

  Var loss;
  double disc = 0.0, gp = 0.0;
  if (cfg_.variant == VariantId::standard_a) {
    const Var adv = losses::adversarial_loss(xv, yv, gyv, bxv, phi, psi);
    disc = adv.item();
    loss = ad::neg(adv);
  } else {
    const auto pair = losses::otdisc_loss(cfg_.variant, xv, yv, gyv, bxv, phi, psi);
    disc = pair.generator.item();
    loss = pair.discriminator;
    if (cfg_.lipschitz.kind == models::LipschitzMode::Kind::gradient_penalty) {
      Var pen = losses::gradient_penalty(phi, x, g_y, cfg_.eta, gp_rng_);
      if (psi) pen = pen + losses::gradient_penalty(psi, y, back_x, cfg_.eta, gp_rng_);
      gp = pen.item();
      loss = loss + pen;
    }
  }

  const auto vars = comps_.critic_vars();
  const auto grads = ad::grad(loss, vars);
  const std::size_t n_phi = comps_.phi->params().size();
  apply_grads(opt_phi_.get(), grads, 0, n_phi);
  apply_grads(opt_psi_.get(), grads, n_phi, vars.size() - n_phi);

  if (cfg_.variant != VariantId::standard_a &&
      cfg_.lipschitz.kind != models::LipschitzMode::Kind::gradient_penalty) {
    models::enforce_lipschitz(*comps_.phi, cfg_.lipschitz, &comps_.phi->power_vectors());
    if (comps_.psi) models::enforce_lipschitz(*comps_.psi, cfg_.lipschitz, &comps_.psi->power_vectors());
  }
  last_gp_ = gp;
  // Critic steps do not evaluate the cycle term.
  auto b = losses::make_bundle(0.0, disc, gp, cfg_.gamma, cfg_.eta);
  check_finite(b, "discriminator step");
  return b;
}

losses::LossBundle Trainer::generator_step(const Tensor& x, const Tensor& y) {
  const auto back = comps_.back();
  const auto G = comps_.g_map();
  const Var xv(x), yv(y);
  const Var g_y = G(yv);
  const Var back_x = back.map(xv);

  Var cycle, disc;
  if (cfg_.variant == VariantId::standard_a) {
    const auto f = comps_.F;
    const auto std_losses = losses::standard_cyclegan_losses(
        xv, yv, g_y, back_x, G, [f](const Var& v) { return f->forward(v); }, comps_.phi_fn(), comps_.psi_fn());
    cycle = std_losses.cycle;
    disc = std_losses.adversarial;
  } else {
    cycle = losses::cycle_loss(cfg_.variant, xv, yv, g_y, back_x, G, back);
    disc = losses::otdisc_loss(cfg_.variant, xv, yv, g_y, back_x, comps_.phi_fn(), comps_.psi_fn()).generator;
  }
  const Var total = disc + ad::scale(cycle, cfg_.gamma);
  const auto b = losses::make_bundle(cycle.item(), disc.item(), last_gp_, cfg_.gamma, cfg_.eta);
  check_finite(b, "generator step");

  std::vector<Var> vars = comps_.generator_vars();
  const std::size_t n_g = vars.size();
  const auto fv = comps_.forward_vars();
  vars.insert(vars.end(), fv.begin(), fv.end());
  const auto grads = ad::grad(total, vars);
  apply_grads(opt_g_.get(), grads, 0, n_g);
  apply_grads(opt_f_.get(), grads, n_g, fv.size());
  project_kernel();
  return b;
}

void Trainer::project_kernel() {
  if (!comps_.kernel.defined()) return;
  auto k = comps_.kernel.mutable_value().values();
  switch (comps_.kernel_projection) {
    case config::KernelSpec::Projection::none: break;
    case config::KernelSpec::Projection::nonnegative:
      for (auto& v : k) v = std::max(v, 0.0);
      break;
    case config::KernelSpec::Projection::simplex: project_simplex(k, comps_.kernel_mass); break;
  }
}

void project_simplex(std::span<double> k, double mass) {
  if (k.empty()) return;
  if (!(mass > 0.0)) throw DomainError("project_simplex: mass must be positive");
  std::vector<double> u(k.begin(), k.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double run = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    run += u[j];
    const double t = (run - mass) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (auto& v : k) v = std::max(v - theta, 0.0);
}

void calibrate_kernel_mass(Components& c, const Tensor& x_pool, const Tensor& y_pool) {
  if (!c.kernel.defined()) return;
  const double ratio = (y_pool.sum() / static_cast<double>(y_pool.size())) / (x_pool.sum() / static_cast<double>(x_pool.size()));
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw ConfigError("model.kernel.mass: data needs pools with positive mean, got ratio " + std::to_string(ratio));
  Tensor& k = c.kernel.mutable_value();
  const double s = k.sum();
  for (auto& v : k.values()) v *= ratio / s;
  c.kernel_mass = ratio;
}

double lr_scale(const config::OptimizerConfig& o, int epoch) {
  const int start = o.epochs - o.decay_epochs;
  if (o.decay_epochs == 0 || epoch < start) return 1.0;
  return 1.0 - static_cast<double>(epoch - start + 1) / (o.decay_epochs + 1);
}

std::vector<LogRecord> Trainer::train(const StepHook& hook) {
  std::vector<LogRecord> log;
  const int bs = cfg_.optimizer.batch_size;
  const int per_epoch = steps_per_epoch();
  for (; epoch_ < cfg_.optimizer.epochs; ++epoch_) {
    const double scale = lr_scale(cfg_.optimizer, epoch_);
    for (auto* o : {opt_g_.get(), opt_f_.get(), opt_phi_.get(), opt_psi_.get()})
      if (o) o->set_lr_scale(scale);
    for (int s = 0; s < per_epoch; ++s) {
      for (int k = 0; k < cfg_.optimizer.n_critic; ++k) {
        const Tensor x = x_iter_.next(bs);
        const Tensor y = y_iter_.next(bs);
        discriminator_step(x, y);
      }
      const Tensor x = x_iter_.next(bs);
      const Tensor y = y_iter_.next(bs);
      LogRecord r{step_ + 1, generator_step(x, y)};
      ++step_;
      log.push_back(r);
      if (hook) hook(*this, r);
    }
  }
  return log;
}

namespace {

struct Flat {
  std::vector<double> data;
  nlohmann::json layout = nlohmann::json::array();

  void add(const std::string& name, const Tensor& t, const char* role) {
    const Shape s = t.shape();
    layout.push_back({{"name", name}, {"role", role}, {"shape", {s.n, s.c, s.h, s.w}}});
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
};

void save_component(const fs::path& file, const std::string& name, const Flat& f) {
  io::write_array(file, {{f.data.size()}, f.data});
  io::write_sidecar(file, {{"component", name}, {"layout", f.layout}});
}

Flat flatten(models::Module& m) {
  Flat f;
  for (const auto& p : m.params()) f.add(p.name, p.var.value(), "param");
  if (auto* g = dynamic_cast<models::Generator*>(&m)) {
    for (std::size_t i = 0; i < g->running_means().size(); ++i) {
      if (g->running_means()[i].empty()) continue;
      f.add("bn" + std::to_string(i) + ".mean", g->running_means()[i], "running_mean");
      f.add("bn" + std::to_string(i) + ".var", g->running_vars()[i], "running_var");
    }
  }
  return f;
}

void restore(models::Module& m, const fs::path& file) {
  const io::Array a = io::read_array(file);
  const auto meta = io::read_sidecar(file);
  if (!meta.contains("layout")) throw FileError("checkpoint sidecar missing layout: " + file.string());
  std::size_t offset = 0;
  std::size_t param = 0;
  auto* g = dynamic_cast<models::Generator*>(&m);
  for (const auto& e : meta["layout"]) {
    const auto dims = e["shape"].get<std::vector<int>>();
    const Shape s{dims.at(0), dims.at(1), dims.at(2), dims.at(3)};
    if (offset + s.numel() > a.data.size()) throw FileError("checkpoint truncated: " + file.string());
    Tensor t(s, std::vector<double>(a.data.begin() + offset, a.data.begin() + offset + s.numel()));
    offset += s.numel();
    const std::string role = e["role"];
    if (role == "param") {
      if (param >= m.params().size() || m.params()[param].var.shape() != s)
        throw FileError("checkpoint does not match the network in " + file.string() + " at " +
                        e["name"].get<std::string>());
      m.params()[param++].var.mutable_value() = std::move(t);
    } else if (g) {
      const std::string name = e["name"];
      const std::size_t slot = std::stoul(name.substr(2));
      if (slot >= g->running_means().size()) throw FileError("checkpoint buffer out of range: " + name);
      (role == "running_mean" ? g->running_means() : g->running_vars())[slot] = std::move(t);
    }
  }
  if (param != m.params().size()) throw FileError("checkpoint has too few parameters: " + file.string());
}

}  // namespace

void save_checkpoint(const Components& c, const fs::path& dir, const nlohmann::json& manifest) {
  fs::create_directories(dir);
  nlohmann::json files = nlohmann::json::array();
  auto put = [&](const std::string& name, const Flat& f, const ComponentInfo& info) {
    const std::string file = name + ".bin";
    save_component(dir / file, name, f);
    files.push_back({{"name", name}, {"kind", info.kind}, {"parameters", info.parameters}, {"file", file}});
  };
  const auto infos = c.manifest();
  for (const auto& info : infos) {
    if (info.name == "G") put("G", flatten(*c.G), info);
    if (info.name == "F" || info.name == "H") put(info.name, flatten(*c.F), info);
    if (info.name == "kernel") {
      Flat f;
      f.add("kernel", c.kernel.value(), "param");
      put("kernel", f, info);
    }
    if (info.name == "phi") put("phi", flatten(*c.phi), info);
    if (info.name == "psi") put("psi", flatten(*c.psi), info);
  }
  nlohmann::json m = manifest;
  m["variant"] = losses::to_string(c.variant);
  m["components"] = files;
  io::write_json(dir / "manifest.json", m);
}

void load_checkpoint(Components& c, const fs::path& dir) {
  const auto m = io::read_json(dir / "manifest.json");
  if (m.value("variant", "") != losses::to_string(c.variant))
    throw ConfigError("checkpoint variant " + m.value("variant", std::string("?")) + " does not match " +
                      losses::to_string(c.variant));
  for (const auto& e : m.at("components")) {
    const std::string name = e.at("name");
    const fs::path file = dir / e.at("file").get<std::string>();
    if (!fs::exists(file)) throw FileError("missing checkpoint file for '" + name + "': " + file.string());
    if (name == "G") restore(*c.G, file);
    if ((name == "F" || name == "H") && c.F) restore(*c.F, file);
    if (name == "phi") restore(*c.phi, file);
    if (name == "psi" && c.psi) restore(*c.psi, file);
    if (name == "kernel" && c.kernel.defined()) {
      const io::Array a = io::read_array(file);
      if (a.data.size() != c.kernel.value().size()) throw FileError("kernel size mismatch in " + file.string());
      c.kernel.mutable_value() = Tensor(c.kernel.shape(), a.data);
    }
  }
}

}  // namespace otcg::train
