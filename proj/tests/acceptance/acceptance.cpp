// Acceptance gate. One criterion per invocation:
//   otcg_acceptance <criterion>     prints one PASS/FAIL line, exit 0/1
//   otcg_acceptance all             every criterion in turn
// Tolerances are fixed here and echoed in each line.
#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "otcg/errors.hpp"
#include "otcg/experiment.hpp"
#include "otcg/forward_physics.hpp"
#include "otcg/losses.hpp"
#include "otcg/metrics.hpp"
#include "otcg/ot_oracle.hpp"
#include "otcg/tensor_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace otcg;
using ad::Var;
using otcg::test::random_tensor;

namespace {

constexpr double kProp1Tol = 1e-8;
constexpr double kInverseTol = 1e-9;
constexpr double kDualityTol = 1e-8;
constexpr double kAlgebraTol = 1e-10;
constexpr double kFdTol = 1e-4;
constexpr double kGpClosedTol = 1e-10;
constexpr double kMetricTol = 1e-9;
constexpr int kSeeds = 5;
constexpr int kSeedsNeeded = 4;
constexpr double kBudgetSeconds = 30.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------ transport

Outcome prop1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240);
  int failed = 0, cross_failed = 0;
  double worst_upper = -INFINITY, worst_gap = -INFINITY;
  for (int i = 0; i < 100; ++i) {
    const auto c = ot::random_case(rng, 8, 4);
    const auto cert = ot::certify_prop1(c.mu, c.nu, c.G, c.H, kProp1Tol);
    // l_OT' again through the transport LP, independent of the potential LP.
    const double primal = 0.5 * (ot::wasserstein1_primal(c.mu, c.nu.pushforward(c.G)) +
                                 ot::wasserstein1_primal(c.nu, c.mu.pushforward(c.H)));
    cross_failed += std::abs(primal - cert.ell_OT_prime) > kProp1Tol;
    failed += !(cert.sandwich_ok && cert.gap_ok);
    worst_upper = std::max(worst_upper, cert.K - cert.ell_OT_prime - cert.ell_cycle);
    worst_gap = std::max(worst_gap, std::abs(cert.K - cert.D) - 0.5 * cert.ell_cycle);
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && cross_failed == 0 && secs < 60.0,
          fmt("instances=100 violating=%d lp_route_mismatch=%d max(K-l_OT'-l_cycle)=%.3g "
              "max(|K-D|-l_cycle/2)=%.3g tol=%g runtime=%.2fs (<60s)",
              failed, cross_failed, worst_upper, worst_gap, kProp1Tol, secs)};
}

Outcome exact_inverse() {
  Rng rng(20241);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto c = ot::random_case(rng, 8, 4);
    c.nu = c.mu.pushforward(c.H);
    c.G = c.H.inverse();
    const auto cert = ot::certify_prop1(c.mu, c.nu, c.G, c.H);
    worst = std::max(worst, std::abs(cert.K - cert.D));
  }
  return {worst <= kInverseTol, fmt("instances=100 (nu = H#mu, G = H^-1) max|K-D|=%.3g tol=%g", worst, kInverseTol)};
}

Outcome strong_duality() {
  Rng rng(20242);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> pts(1, 8), dims(1, 4);
  std::uniform_real_distribution<double> uw(0.01, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int d = dims(rng);
    auto cloud = [&] {
      ot::DiscretePointSet s;
      const int m = pts(rng);
      double total = 0.0;
      for (int k = 0; k < m; ++k) {
        ot::Point p(d);
        for (auto& v : p) v = n(rng);
        s.points.push_back(p);
        s.weights.push_back(uw(rng));
        total += s.weights.back();
      }
      for (auto& w : s.weights) w /= total;
      return s;
    };
    const auto mu = cloud(), nu = cloud();
    const double primal = ot::wasserstein1_primal(mu, nu), dual = ot::wasserstein1(mu, nu);
    const auto inst = ot::DiscreteOTInstance::from_metric(mu, nu);
    const double kp = ot::solve_primal(inst).value, kd = ot::solve_dual(inst).value;
    worst = std::max({worst, std::abs(primal - dual), std::abs(kp - kd), std::abs(kp - primal)});
  }
  return {worst <= kDualityTol, fmt("instances=100 max|primal-dual|=%.3g tol=%g", worst, kDualityTol)};
}

// ------------------------------------------------------------ physics

Outcome operator_algebra() {
  Rng rng(20243);
  std::uniform_int_distribution<int> side(4, 12), ks(1, 3);
  double adj = 0.0, idem = 0.0, self = 0.0, mass = 0.0;
  constexpr int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int h = side(rng), w = side(rng);
    // Adjoint: learnable kernel (both boundaries) and the Fourier projector.
    const int k = 2 * ks(rng) + 1;
    const auto boundary = t % 2 ? physics::Boundary::periodic : physics::Boundary::zero_pad;
    const physics::LearnableConvKernel conv(random_tensor({1, 1, k, k}, rng), boundary);
    const Tensor x = random_tensor({2, 1, h, w}, rng), y = random_tensor({2, 1, h, w}, rng);
    adj = std::max(adj, std::abs(dot(conv.apply(x), y) - dot(x, conv.adjoint(y))) / (1.0 + std::abs(dot(x, y))));

    const auto mask = physics::make_mask({1 + t % 4, 0.125 * (t % 3), {}}, h, w, static_cast<std::uint64_t>(t));
    const auto f = physics::KnownLinearOperator::fourier_subsample(mask);
    const Tensor u = random_tensor({1, 2, h, w}, rng), v = random_tensor({1, 2, h, w}, rng);
    const Tensor fu = f.apply(u);
    adj = std::max(adj, std::abs(dot(fu, v) - dot(u, f.adjoint(v))) / (1.0 + norm2(u) * norm2(v)));
    Tensor diff = f.apply(fu);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= fu[i];
    idem = std::max(idem, diff.abs_max());
    self = std::max(self, std::abs(dot(fu, v) - dot(u, f.apply(v))) / (1.0 + norm2(u) * norm2(v)));

    // Mass: periodic blur by a normalized kernel keeps the image sum.
    Tensor kern = random_tensor({1, 1, k, k}, rng, 0.0, 1.0);
    const double s = kern.sum();
    for (auto& c : kern.values()) c /= s;
    const physics::LearnableConvKernel blur(kern, physics::Boundary::periodic);
    mass = std::max(mass, std::abs(blur.apply(x).sum() - x.sum()) / (1.0 + std::abs(x.sum())));
  }
  const bool ok = adj <= kAlgebraTol && idem <= kAlgebraTol && self <= kAlgebraTol && mass <= kAlgebraTol;
  return {ok, fmt("trials=%d each adjoint=%.2g idempotence=%.2g self_adjoint=%.2g mass=%.2g tol=%g", trials, adj, idem,
                  self, mass, kAlgebraTol)};
}

// ------------------------------------------------------------ losses

Outcome gradient_integrity() {
  using namespace losses;
  using otcg::test::Toy;
  Rng rng(20244);
  const Tensor x = random_tensor({2, 1, 5, 5}, rng), y = random_tensor({2, 1, 5, 5}, rng);
  Toy g(1, 3, 1, rng), f(1, 3, 1, rng), phi(1, 2, 1, rng), psi(1, 2, 1, rng);
  const Var kernel(random_tensor({1, 1, 3, 3}, rng, 0.0, 0.3), true);
  const auto known =
      physics::KnownLinearOperator::explicit_matrix(Eigen::MatrixXd::Random(25, 25), {1, 1, 5, 5}, {1, 1, 5, 5});
  const Potential phi_fn = [&](const Var& v) { return phi.potential(v); };
  const Potential psi_fn = [&](const Var& v) { return psi.potential(v); };
  const auto sig = [](const Toy& t) -> Potential { return [&t](const Var& v) { return ad::sigmoid(t.potential(v)); }; };

  std::map<VariantId, ReturnPath> paths{
      {VariantId::standard_a, {PathKind::network, [&](const Var& v) { return f(v); }}},
      {VariantId::linear_b,
       {PathKind::kernel,
        [&](const Var& v) { return physics::LearnableConvKernel::apply(v, kernel, physics::Boundary::periodic); }}},
      {VariantId::known_c, {PathKind::known_operator, [&](const Var& v) { return known.apply(v); }}},
      {VariantId::unknown_d, {PathKind::neural_operator, [&](const Var& v) { return f(v); }}}};

  std::map<std::string, double> worst;
  for (const auto& [variant, back] : paths) {
    const std::string tag = to_string(variant);
    const auto G_of = [&](const Var& w1) -> Map { return [&, w1](const Var& v) { return g.apply(v, w1, g.w2); }; };
    worst["cycle_" + tag] = otcg::test::fd_check(
        [&](const Var& w1) { return cycle_loss(variant, Var(x), Var(y), G_of(w1), back); }, g.w1.value());
    if (variant == VariantId::standard_a) {
      worst["adversarial_a"] = otcg::test::fd_check(
          [&](const Var& w1) {
            return standard_cyclegan_losses(Var(x), Var(y), G_of(w1), back.map, sig(phi), sig(psi)).adversarial;
          },
          g.w1.value());
      continue;
    }
    const Potential psi_or_none = variant == VariantId::known_c ? Potential{} : psi_fn;
    worst["otdisc_G_" + tag] = otcg::test::fd_check(
        [&](const Var& w1) { return otdisc_loss(variant, Var(x), Var(y), G_of(w1), back, phi_fn, psi_or_none).generator; },
        g.w1.value());
    // Critic side: the same loss differentiated in phi's weights.
    worst["otdisc_phi_" + tag] = otcg::test::fd_check(
        [&](const Var& w1) {
          const Potential p = [&](const Var& v) { return ad::mean_per_sample(phi.apply(v, w1, phi.w2)); };
          return otdisc_loss(variant, Var(x), Var(y), [&](const Var& v) { return g(v); }, back, p, psi_or_none)
              .discriminator;
        },
        phi.w1.value());
  }
  const std::vector<double> alpha{0.25, 0.7};
  worst["gradient_penalty"] = otcg::test::fd_check(
      [&](const Var& w1) {
        const Potential p = [&](const Var& v) { return ad::mean_per_sample(phi.apply(v, w1, phi.w2)); };
        return gradient_penalty(p, x, y, 10.0, alpha);
      },
      phi.w1.value(), 1e-5);

  // Linear critic phi(x) = <w, x>: penalty is eta (|w| - 1)^2 exactly.
  double closed = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Tensor w = random_tensor({1, 1, 3, 3}, rng, -1.0, 1.0);
    const Potential lin = [wv = Var(w)](const Var& v) { return ad::sum_per_sample(v * wv); };
    const Tensor a = random_tensor({3, 1, 3, 3}, rng), b = random_tensor({3, 1, 3, 3}, rng);
    const double expected = 10.0 * std::pow(norm2(w) - 1.0, 2);
    closed = std::max(closed, std::abs(gradient_penalty(lin, a, b, 10.0, rng).item() - expected));
  }

  double max_fd = 0.0;
  std::string which;
  for (const auto& [k, v] : worst)
    if (v >= max_fd) {
      max_fd = v;
      which = k;
    }
  return {max_fd <= kFdTol && closed <= kGpClosedTol,
          fmt("losses=%zu max_fd_rel_err=%.2g (%s) tol=%g gp_closed_form_err=%.2g tol=%g", worst.size(), max_fd,
              which.c_str(), kFdTol, closed, kGpClosedTol)};
}

// ------------------------------------------------------------ metrics

Outcome metric_oracles() {
  Rng rng(20245);
  double psnr_err = 0.0, ssim_err = 0.0;
  bool ssim_one = true;
  for (int t = 0; t < 100; ++t) {
    const int side = 4 + t % 29;
    const Tensor ref = random_tensor({1, 1, side, side}, rng, -0.5, 1.5);
    const Tensor out = random_tensor({1, 1, side, side}, rng, -0.5, 1.5);
    // Scalar loops straight from the definitions.
    long double peak = 0, err = 0, mx = 0, my = 0;
    const long double n = ref.size();
    long double lo = ref[0], hi = ref[0];
    for (std::size_t i = 0; i < ref.size(); ++i) {
      peak = std::max<long double>(peak, std::fabs(ref[i]));
      err += std::pow(static_cast<long double>(out[i]) - ref[i], 2);
      mx += out[i];
      my += ref[i];
      lo = std::min<long double>(lo, ref[i]);
      hi = std::max<long double>(hi, ref[i]);
    }
    mx /= n;
    my /= n;
    long double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      vx += (out[i] - mx) * (out[i] - mx);
      vy += (ref[i] - my) * (ref[i] - my);
      cxy += (out[i] - mx) * (ref[i] - my);
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    const long double c1 = std::pow(0.01L * (hi - lo), 2), c2 = std::pow(0.03L * (hi - lo), 2);
    const double psnr_loop = static_cast<double>(20.0L * std::log10(n * peak / std::sqrt(err)));
    const double ssim_loop =
        static_cast<double>((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
    psnr_err = std::max(psnr_err, std::abs(metrics::psnr(out, ref) - psnr_loop));
    ssim_err = std::max(ssim_err, std::abs(metrics::ssim(out.values(), ref.values()) - ssim_loop));
    ssim_one = ssim_one && metrics::ssim(ref.values(), ref.values()) == 1.0;
  }
  return {psnr_err <= kMetricTol && ssim_err <= kMetricTol && ssim_one,
          fmt("pairs=100 psnr_err=%.2g ssim_err=%.2g tol=%g ssim(x,x)==1:%s", psnr_err, ssim_err, kMetricTol,
              ssim_one ? "yes" : "no")};
}

// ------------------------------------------------------------ experiments

config::ExperimentConfig shipped(const std::string& name) {
  return config::load(fs::path(OTCG_SOURCE_DIR) / "configs" / name);
}

/// Trains `name` for seeds 0..kSeeds-1 and applies `seed_ok` to each evaluation.
Outcome desk_scale(const std::string& name, double min_gain, std::optional<double> min_ncc) {
  int good = 0;
  double worst_secs = 0.0;
  std::ostringstream per;
  for (int s = 0; s < kSeeds; ++s) {
    auto cfg = shipped(name);
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = experiment::prepare(cfg);
    auto r = experiment::train(p);
    const auto e = experiment::evaluate(r.components, p, true);
    const double secs = seconds_since(t0);
    worst_secs = std::max(worst_secs, secs);
    const double gain = e.output->psnr_summary().median - e.baseline.psnr_summary().median;
    bool ok = gain >= min_gain && secs <= kBudgetSeconds;
    per << " seed" << s << "=" << fmt("%+.2fdB", gain);
    if (min_ncc) {
      ok = ok && e.kernel_ncc && *e.kernel_ncc >= *min_ncc;
      per << fmt("/ncc%.3f", e.kernel_ncc.value_or(0.0));
    }
    per << (ok ? "" : "(x)");
    good += ok;
    std::fprintf(stderr, "  %s seed=%d gain=%.3f dB ncc=%.3f baseline=%.2f output=%.2f time=%.0fs\n", name.c_str(), s,
                 gain, e.kernel_ncc.value_or(NAN), e.baseline.psnr_summary().median, e.output->psnr_summary().median,
                 secs);
  }
  std::string need = fmt("median_gain>=%gdB", min_gain);
  if (min_ncc) need += fmt(" kernel_ncc>=%g", *min_ncc);
  return {good >= kSeedsNeeded, fmt("%s seeds_ok=%d/%d (need %d; %s; <=%gmin each, worst %.0fs)%s", name.c_str(), good,
                                    kSeeds, kSeedsNeeded, need.c_str(), kBudgetSeconds / 60, worst_secs,
                                    per.str().c_str())};
}

Outcome variant_structure() {
  std::ostringstream d;
  bool ok = true;
  const auto inspect = [&](const std::string& file, const std::function<bool(const train::Components&)>& rule) {
    const auto cfg = shipped(file);
    const auto comps = train::build_components(cfg, experiment::build_physics(cfg), 0);
    const bool pass = rule(comps);
    d << " " << losses::to_string(cfg.variant) << "=[";
    for (const auto& c : comps.manifest()) d << c.name << ":" << c.kind << ":" << c.parameters << " ";
    d.seekp(-1, std::ios_base::cur);
    d << "]" << (pass ? "" : "(x)");
    ok = ok && pass;
  };
  const auto count = [](const train::Components& c, const std::string& kind) {
    int n = 0;
    for (const auto& m : c.manifest()) n += m.kind == kind;
    return n;
  };
  inspect("mri_c.json", [&](const train::Components& c) {
    return c.manifest().size() == 2 && count(c, "generator") == 1 && count(c, "discriminator") == 1;
  });
  inspect("deconv_b.json", [&](const train::Components& c) {
    const auto k = c.kernel.value().shape();
    return count(c, "generator") == 1 && count(c, "kernel") == 1 && count(c, "discriminator") == 2 && k.n == 1 &&
           k.c == 1 && k.h == k.w && c.manifest()[1].parameters == static_cast<std::size_t>(k.h * k.w);
  });
  inspect("denoise_d.json", [&](const train::Components& c) {
    return count(c, "generator") == 2 && count(c, "discriminator") == 2 && count(c, "kernel") == 0 && c.F &&
           c.F->spec().depth >= 2;
  });
  return {ok, "manifest" + d.str()};
}

Outcome determinism() {
  auto cfg = shipped("deconv_b.json");
  cfg.optimizer.epochs = 1;
  cfg.optimizer.steps_per_epoch = 8;
  cfg.checkpoint_every = 0;
  const auto root = fs::path(OTCG_TEST_TMP) / "determinism";
  fs::remove_all(root);
  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / std::to_string(run);
    experiment::train(experiment::prepare(cfg), dir);
    std::ifstream is(dir / "loss_log.jsonl", std::ios::binary);
    logs[run].assign(std::istreambuf_iterator<char>(is), {});
  }
  const bool ok = !logs[0].empty() && logs[0] == logs[1];
  return {ok, fmt("config=deconv_b.json steps=8 log_bytes=%zu identical=%s", logs[0].size(), ok ? "yes" : "no")};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"prop1_certification", prop1},
      {"exact_inverse_zero_gap", exact_inverse},
      {"strong_duality", strong_duality},
      {"operator_algebra", operator_algebra},
      {"gradient_integrity", gradient_integrity},
      {"metric_oracles", metric_oracles},
      {"deconvolution_b", [] { return desk_scale("deconv_b.json", 2.0, 0.8); }},
      {"mri_c", [] { return desk_scale("mri_c.json", 1.0, std::nullopt); }},
      {"denoising_d", [] { return desk_scale("denoise_d.json", 2.0, std::nullopt); }},
      {"variant_structure", variant_structure},
      {"determinism", determinism},
  };
  return all;
}

bool run_one(const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  std::printf("%s %s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  const std::string want = argc > 1 ? argv[1] : "all";
  bool ok = true, found = false;
  for (const auto& [name, fn] : criteria()) {
    if (want != "all" && want != name) continue;
    found = true;
    ok = run_one(name, fn) && ok;
  }
  if (!found) {
    std::fprintf(stderr, "unknown criterion '%s'; one of:", want.c_str());
    for (const auto& c : criteria()) std::fprintf(stderr, " %s", c.first.c_str());
    std::fprintf(stderr, " all\n");
    return 2;
  }
  return ok ? 0 : 1;
}
