// otcg: command line front end. Exit codes: 0 ok, 2 config error,
// 3 numerical failure, 4 failed verification.
#include <malloc.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "otcg/errors.hpp"
#include "otcg/experiment.hpp"
#include "otcg/ot_oracle.hpp"
#include "otcg/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace otcg;

namespace {

int verify_ot(int instances, int max_points, int dim, std::uint64_t seed) {
  if (instances < 1 || max_points < 1 || dim < 1) throw ConfigError("verify-ot: counts must be >= 1");
  Rng rng(seed);
  int failed = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < instances; ++i) {
    const auto c = ot::random_case(rng, max_points, dim);
    const auto cert = ot::certify_prop1(c.mu, c.nu, c.G, c.H);
    const bool ok = cert.lower_ok && cert.upper_ok && cert.sandwich_ok && cert.gap_ok;
    failed += !ok;
    std::printf(
        "instance=%d n=%zu m=%zu dim=%ld K=%.12g ell_ot_prime=%.12g ell_cycle=%.12g D=%.12g lower=%s upper=%s "
        "sandwich=%s gap=%s\n",
        i, c.mu.size(), c.nu.size(), static_cast<long>(c.mu.dim()), cert.K, cert.ell_OT_prime, cert.ell_cycle,
        cert.D, cert.lower_ok ? "ok" : "FAIL", cert.upper_ok ? "ok" : "FAIL", cert.sandwich_ok ? "ok" : "FAIL",
        cert.gap_ok ? "ok" : "FAIL");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("summary instances=%d failed=%d seconds=%.3f\n", instances, failed, secs);
  std::fflush(stdout);
  return failed ? 4 : 0;
}

config::ExperimentConfig load_config(const std::string& path, const std::string& variant,
                                     std::optional<std::uint64_t> seed) {
  auto cfg = config::load(path);
  if (!variant.empty()) cfg.variant = losses::parse_variant(variant);
  if (seed) cfg.seed = *seed;
  config::validate(cfg);
  return cfg;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

void evaluate(const fs::path& checkpoint, const fs::path& dataset, const std::string& metrics, const fs::path& out) {
  const auto wanted = split(metrics);
  for (const auto& m : wanted)
    if (m != "psnr" && m != "ssim" && m != "frc") throw ConfigError("--metrics: unknown metric '" + m + "'");
  const auto manifest = io::read_json(checkpoint / "manifest.json");
  if (!manifest.contains("config")) throw FileError("checkpoint manifest has no 'config' entry");
  experiment::Prepared p = experiment::read_dataset(dataset);
  const auto data_cfg = p.cfg;
  p.cfg = config::from_json(manifest.at("config"));
  // The networks come from the checkpoint's config; the operator and test
  // images from the dataset.
  if (p.cfg.data.scene.size != data_cfg.data.scene.size || p.cfg.data.scene.channels != data_cfg.data.scene.channels)
    throw ConfigError("checkpoint and dataset disagree on image size or channels");
  auto comps = train::build_components(p.cfg, p.physics, p.seeds.init());
  train::load_checkpoint(comps, checkpoint);
  const auto e = experiment::evaluate(comps, p, true);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  experiment::write_evaluation(e, out, wanted);
  std::cout << experiment::to_json(e).dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap instead of fresh mmaps per step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"OT-cycleGAN experiments"};
  app.require_subcommand(1);

  auto* vo = app.add_subcommand("verify-ot", "certify the cycle-consistency bound on random discrete instances");
  int instances = 100, max_points = 8, dim = 4;
  std::uint64_t seed = 0;
  vo->add_option("--instances", instances)->capture_default_str();
  vo->add_option("--max-points", max_points)->capture_default_str();
  vo->add_option("--dim", dim)->capture_default_str();
  vo->add_option("--seed", seed)->capture_default_str();

  std::string config_path, variant, out;
  std::optional<std::uint64_t> seed_override;

  auto* gd = app.add_subcommand("generate-data", "write the synthetic dataset described by a config");
  gd->add_option("--spec", config_path)->required();
  gd->add_option("--seed", seed_override);
  gd->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "train one variant and write checkpoints plus a loss log");
  std::string data_dir;
  tr->add_option("--config", config_path)->required();
  tr->add_option("--variant", variant)->check(CLI::IsMember({"a", "b", "c", "d"}));
  tr->add_option("--seed", seed_override);
  tr->add_option("--data", data_dir, "dataset written by generate-data (default: regenerate)");
  tr->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a dataset's held-out images");
  std::string checkpoint, dataset, metric_list = "psnr,ssim,frc";
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--metrics", metric_list)->capture_default_str();
  ev->add_option("--out", out)->required();

  auto* pl = app.add_subcommand("plot", "render loss curves, triptychs and FRC curves for a run");
  std::string manifest;
  pl->add_option("--manifest", manifest)->required();

  auto* run = app.add_subcommand("run", "generate, train and evaluate in one go");
  run->add_option("--config", config_path)->required();
  run->add_option("--variant", variant)->check(CLI::IsMember({"a", "b", "c", "d"}));
  run->add_option("--seed", seed_override);
  run->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*vo) return verify_ot(instances, max_points, dim, seed);
    if (*gd) {
      const auto cfg = load_config(config_path, "", seed_override);
      experiment::write_dataset(out, experiment::prepare(cfg));
      std::cout << "dataset " << out << " config_hash=" << config::hash(cfg) << "\n";
    } else if (*tr) {
      const auto cfg = load_config(config_path, variant, seed_override);
      experiment::Prepared p;
      if (data_dir.empty()) {
        p = experiment::prepare(cfg);
      } else {
        p = experiment::read_dataset(data_dir);
        const auto sections = [](const config::ExperimentConfig& c) {
          const auto j = config::to_json(c);
          return nlohmann::json{{"data", j.at("data")}, {"forward", j.at("forward")}};
        };
        if (sections(p.cfg) != sections(cfg))
          throw ConfigError("--data: dataset was generated from different data/forward settings");
        p.cfg = cfg;
        p.seeds = SeedHierarchy{cfg.seed};
      }
      const auto m = experiment::run_experiment(p, out, false);
      std::cout << "run " << experiment::run_dir(cfg, out).string() << " steps_checkpointed="
                << m["checkpoints"].size() << "\n";
    } else if (*ev) {
      evaluate(checkpoint, dataset, metric_list, out);
    } else if (*pl) {
      for (const auto& f : experiment::plot(manifest)) std::cout << f.string() << "\n";
    } else if (*run) {
      const auto cfg = load_config(config_path, variant, seed_override);
      const auto m = experiment::run_experiment(cfg, out);
      std::cout << m.dump(2) << "\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
