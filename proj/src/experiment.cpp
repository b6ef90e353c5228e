#include "otcg/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "otcg/errors.hpp"
#include "otcg/image_out.hpp"
#include "otcg/tensor_io.hpp"

namespace otcg::experiment {

physics::ForwardOperator build_physics(const config::ExperimentConfig& cfg) {
  const SeedHierarchy seeds{cfg.seed};
  return config::build_forward(cfg.forward, cfg.data.scene.size, cfg.data.scene.channels,
                               derive_seed(seeds.data(), "mask"));
}

Prepared prepare(const config::ExperimentConfig& cfg) {
  config::validate(cfg);
  Prepared p{cfg, SeedHierarchy{cfg.seed}, build_physics(cfg), {}};
  p.data = data::generate(cfg.data.scene, p.physics, p.seeds.data());
  if (cfg.data.hflip || cfg.data.vflip) {
    p.data.x = data::augment(p.data.x, cfg.data.hflip, cfg.data.vflip);
    p.data.y = data::augment(p.data.y, cfg.data.hflip, cfg.data.vflip);
  }
  return p;
}

namespace {

nlohmann::json normalization_json(const data::NormalizationRecord& r) {
  return {{"method", data::to_string(r.method)}, {"offset", r.offset}, {"scale", r.scale}, {"per_image", r.per_image}};
}

data::NormalizationRecord normalization_from(const nlohmann::json& j) {
  data::NormalizationRecord r;
  r.method = data::parse_normalization(j.at("method"));
  r.offset = j.at("offset");
  r.scale = j.at("scale");
  r.per_image = j.at("per_image").get<std::vector<double>>();
  return r;
}

void put_tensor(const fs::path& file, const Tensor& t, const nlohmann::json& meta) {
  io::write_tensor(file, t);
  io::write_sidecar(file, meta);
}

}  // namespace

void write_dataset(const fs::path& dir, const Prepared& p) {
  fs::create_directories(dir);
  const std::string h = config::hash(p.cfg);
  const auto meta = [&](const data::NormalizationRecord& r, const char* role) {
    return nlohmann::json{
        {"role", role}, {"normalization", normalization_json(r)}, {"seed", p.cfg.seed}, {"spec_hash", h}};
  };
  put_tensor(dir / "x_pool.bin", p.data.x.images, meta(p.data.x.normalization, "x_pool"));
  put_tensor(dir / "y_pool.bin", p.data.y.images, meta(p.data.y.normalization, "y_pool"));
  const auto& t = p.data.test;
  if (!t.truth.empty()) {
    put_tensor(dir / "test_truth.bin", t.truth, meta(t.truth_normalization, "test_truth"));
    put_tensor(dir / "test_measurement.bin", t.measurement, meta(t.measurement_normalization, "test_measurement"));
    put_tensor(dir / "test_measurement_repeat.bin", t.measurement_repeat,
               meta(t.measurement_normalization, "test_measurement_repeat"));
  }
  if (const auto* k = std::get_if<physics::KnownLinearOperator>(&p.physics);
      k && k->kind() == physics::KnownLinearOperator::Kind::fourier_subsample) {
    const auto& m = k->mask();
    io::Array a{{std::uint64_t(m.h), std::uint64_t(m.w)}, std::vector<double>(m.grid.begin(), m.grid.end())};
    io::write_array(dir / "mask.bin", a, io::DType::f32);
    io::write_sidecar(dir / "mask.bin", {{"acceleration", p.cfg.forward.mask.acceleration},
                                         {"acs_fraction", p.cfg.forward.mask.acs_fraction},
                                         {"seed", derive_seed(p.seeds.data(), "mask")}});
  }
  io::write_json(dir / "dataset.json",
                 {{"config", config::to_json(p.cfg)}, {"seed", p.cfg.seed}, {"config_hash", h},
                  {"x_pool", p.data.x.size()}, {"y_pool", p.data.y.size()}, {"test", t.truth.shape().n}});
}

Prepared read_dataset(const fs::path& dir) {
  const auto info = io::read_json(dir / "dataset.json");
  Prepared p;
  p.cfg = config::from_json(info.at("config"));
  p.seeds = SeedHierarchy{p.cfg.seed};
  p.physics = build_physics(p.cfg);
  const auto load = [&](const char* name, Tensor& t, data::NormalizationRecord* r) {
    const fs::path f = dir / name;
    t = io::read_tensor(f);
    if (r) *r = normalization_from(io::read_sidecar(f).at("normalization"));
  };
  load("x_pool.bin", p.data.x.images, &p.data.x.normalization);
  load("y_pool.bin", p.data.y.images, &p.data.y.normalization);
  p.data.x.domain = data::Domain::X;
  p.data.y.domain = data::Domain::Y;
  if (fs::exists(dir / "test_truth.bin")) {
    load("test_truth.bin", p.data.test.truth, &p.data.test.truth_normalization);
    load("test_measurement.bin", p.data.test.measurement, &p.data.test.measurement_normalization);
    load("test_measurement_repeat.bin", p.data.test.measurement_repeat, nullptr);
  }
  return p;
}

TrainResult train(const Prepared& p, const fs::path& out) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult r{train::build_components(p.cfg, p.physics, p.seeds.init()), {}, {}, 0.0};
  train::Trainer trainer(p.cfg, r.components, p.data.x.images, p.data.y.images, p.seeds);

  std::ofstream log;
  if (!out.empty()) {
    fs::create_directories(out);
    log.open(out / "loss_log.jsonl");
    if (!log) throw FileError("cannot write " + (out / "loss_log.jsonl").string());
  }
  const std::string h = config::hash(p.cfg);
  long last_saved = -1;
  const auto checkpoint = [&](long step) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06ld", step);
    const fs::path dir = out / "checkpoints" / name;
    train::save_checkpoint(trainer.components(), dir,
                           {{"step", step},
                            {"config_hash", h},
                            {"seeds",
                             {{"master", p.seeds.master},
                              {"data", p.seeds.data()},
                              {"init", p.seeds.init()},
                              {"training", p.seeds.training()},
                              {"gp", p.seeds.gp()}}},
                            {"config", config::to_json(p.cfg)}});
    r.checkpoints.push_back(dir);
    last_saved = step;
  };

  try {
    r.log = trainer.train([&](const train::Trainer& t, const train::LogRecord& rec) {
      if (log.is_open()) log << train::to_json(rec).dump() << "\n";
      if (!out.empty() && p.cfg.checkpoint_every > 0 && t.step() % p.cfg.checkpoint_every == 0)
        checkpoint(t.step());
    });
  } catch (const NumericalError& e) {
    if (!out.empty())
      io::write_json(out / "nan_dump.json", {{"error", e.what()}, {"step", trainer.step()}, {"config_hash", h}});
    throw;
  }
  if (!out.empty() && last_saved != trainer.step()) checkpoint(trainer.step());
  r.components = trainer.components();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Tensor reference_psf(const config::ExperimentConfig& cfg) {
  const int k = cfg.model.kernel.size;
  const Tensor full = physics::gaussian_kernel(cfg.forward.kernel_size, cfg.forward.psf_sigma);
  Tensor out(Shape{1, 1, k, k});
  const int src = cfg.forward.kernel_size;
  // Align centres (index size/2 in both).
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const int si = i - k / 2 + src / 2, sj = j - k / 2 + src / 2;
      if (si >= 0 && sj >= 0 && si < src && sj < src) out.at(0, 0, i, j) = full.at(0, 0, si, sj);
    }
  return out;
}

namespace {

Tensor apply_in_chunks(models::Generator& g, const Tensor& x, int chunk = 16) {
  std::vector<Tensor> parts;
  for (int first = 0; first < x.shape().n; first += chunk) {
    const int count = std::min(chunk, x.shape().n - first);
    parts.push_back(g(x.slice_batch(first, count)));
  }
  std::vector<Tensor> samples;
  for (const auto& p : parts)
    for (int n = 0; n < p.shape().n; ++n) samples.push_back(p.slice_batch(n, 1));
  return stack_batch(samples);
}

// Single-plane view for FRC: the first channel, or the magnitude of (re, im).
Tensor plane_of(const Tensor& t, int n) {
  const Shape s = t.shape();
  Tensor out(Shape{1, 1, s.h, s.w});
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j)
      out.at(0, 0, i, j) = s.c == 2 ? std::hypot(t.at(n, 0, i, j), t.at(n, 1, i, j)) : t.at(n, 0, i, j);
  return out;
}

}  // namespace

Evaluation evaluate(train::Components& c, const Prepared& p, bool trained) {
  const auto& test = p.data.test;
  if (test.truth.empty()) throw ConfigError("data.test_count: evaluation needs held-out images");
  Evaluation e;
  e.baseline = metrics::evaluate(test.measurement, test.truth);
  if (trained) {
    const Tensor out = apply_in_chunks(*c.G, test.measurement);
    e.output = metrics::evaluate(out, test.truth);
    if (!test.measurement_repeat.empty() && test.truth.shape().h == test.truth.shape().w) {
      const Tensor out2 = apply_in_chunks(*c.G, test.measurement_repeat.slice_batch(0, 1));
      e.frc = metrics::frc(plane_of(out, 0), plane_of(out2, 0), p.cfg.evaluation.pixel_size);
    }
  }
  if (c.kernel.defined()) {
    const Tensor ref = reference_psf(p.cfg);
    e.kernel_ncc = metrics::ncc(c.kernel.value().values(), ref.values());
  }
  return e;
}

namespace {

nlohmann::json summary_json(const metrics::Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"median", s.median}};
}

nlohmann::json report_json(const metrics::MetricReport& r) {
  return {{"psnr_db", summary_json(r.psnr_summary())},
          {"psnr_conventional_db", summary_json(r.psnr_conventional_summary())},
          {"ssim", summary_json(r.ssim_summary())}};
}

}  // namespace

nlohmann::json to_json(const Evaluation& e) {
  nlohmann::json j;
  j["baseline"] = report_json(e.baseline);
  if (e.output) {
    j["output"] = report_json(*e.output);
    j["median_psnr_gain_db"] = e.output->psnr_summary().median - e.baseline.psnr_summary().median;
  }
  if (e.kernel_ncc) j["kernel_ncc"] = *e.kernel_ncc;
  if (e.frc) {
    j["frc"] = {{"resolution", e.frc->resolution},
                {"nyquist_limited", e.frc->nyquist_limited},
                {"threshold", e.frc->threshold},
                {"curve", e.frc->frc}};
  }
  return j;
}

void write_evaluation(const Evaluation& e, const fs::path& report, const std::vector<std::string>& wanted) {
  const auto want = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
  nlohmann::json j = to_json(e);
  for (const char* part : {"baseline", "output"}) {
    if (!j.contains(part)) continue;
    if (!want("psnr")) {
      j[part].erase("psnr_db");
      j[part].erase("psnr_conventional_db");
    }
    if (!want("ssim")) j[part].erase("ssim");
  }
  if (!want("frc")) j.erase("frc");
  io::write_json(report, j);

  fs::path csv = report;
  csv.replace_extension(".csv");
  std::ofstream os(csv);
  if (!os) throw FileError("cannot write " + csv.string());
  os.precision(10);
  os << "image";
  if (want("psnr")) os << ",baseline_psnr_db,baseline_psnr_conventional_db";
  if (want("ssim")) os << ",baseline_ssim";
  if (e.output) {
    if (want("psnr")) os << ",psnr_db,psnr_conventional_db";
    if (want("ssim")) os << ",ssim";
  }
  os << "\n";
  for (std::size_t i = 0; i < e.baseline.psnr_db.size(); ++i) {
    os << i;
    if (want("psnr")) os << "," << e.baseline.psnr_db[i] << "," << e.baseline.psnr_conventional_db[i];
    if (want("ssim")) os << "," << e.baseline.ssim[i];
    if (e.output) {
      if (want("psnr")) os << "," << e.output->psnr_db[i] << "," << e.output->psnr_conventional_db[i];
      if (want("ssim")) os << "," << e.output->ssim[i];
    }
    os << "\n";
  }
}

fs::path run_dir(const config::ExperimentConfig& cfg, const fs::path& root) {
  return root / (cfg.name + "-" + config::hash(cfg));
}

nlohmann::json run_experiment(const Prepared& p, const fs::path& root, bool with_evaluation) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cfg = p.cfg;
  const fs::path dir = run_dir(cfg, root);
  fs::create_directories(dir);
  io::write_json(dir / "config.json", config::to_json(cfg));
  write_dataset(dir / "dataset", p);

  const bool trains = cfg.optimizer.epochs > 0;
  TrainResult t = trains ? train(p, dir) : TrainResult{train::build_components(cfg, p.physics, p.seeds.init()), {}, {}, 0.0};

  nlohmann::json m;
  m["name"] = cfg.name;
  m["config_hash"] = config::hash(cfg);
  m["variant"] = losses::to_string(cfg.variant);
  m["seed"] = cfg.seed;
  m["seeds"] = {{"data", p.seeds.data()}, {"init", p.seeds.init()}, {"training", p.seeds.training()},
                {"gp", p.seeds.gp()}};
  m["config"] = "config.json";
  m["dataset"] = "dataset";
  if (with_evaluation) {
    const Evaluation e = evaluate(t.components, p, trains);
    write_evaluation(e, dir / "evaluation.json", {"psnr", "ssim", "frc"});
    m["evaluation"] = "evaluation.json";
    m["metrics"] = to_json(e);
    m["metrics"].erase("frc");
  }
  nlohmann::json ck = nlohmann::json::array();
  for (const auto& c : t.checkpoints) ck.push_back(fs::relative(c, dir).string());
  m["checkpoints"] = ck;
  if (trains) m["loss_log"] = "loss_log.jsonl";
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& ci : t.components.manifest())
    comps.push_back({{"name", ci.name}, {"kind", ci.kind}, {"parameters", ci.parameters}});
  m["components"] = comps;
  m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  io::write_json(dir / "manifest.json", m);
  return m;
}

nlohmann::json run_experiment(const config::ExperimentConfig& cfg, const fs::path& root) {
  return run_experiment(prepare(cfg), root, true);
}

namespace {

fs::path artifact(const fs::path& base, const nlohmann::json& m, const char* key) {
  if (!m.contains(key)) throw FileError("manifest entry '" + std::string(key) + "' is missing");
  const fs::path p = base / m.at(key).get<std::string>();
  if (!fs::exists(p)) throw FileError("file not found for manifest entry '" + std::string(key) + "': " + p.string());
  return p;
}

}  // namespace

std::vector<fs::path> plot(const fs::path& manifest_path) {
  const auto m = io::read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  const fs::path out = base / "plots";
  std::vector<fs::path> files;

  if (m.contains("loss_log")) {
    std::ifstream is(artifact(base, m, "loss_log"));
    std::vector<double> steps;
    std::vector<std::vector<double>> series(3);
    for (std::string line; std::getline(is, line);) {
      if (line.empty()) continue;
      const auto r = nlohmann::json::parse(line);
      steps.push_back(r.at("step"));
      series[0].push_back(r.at("cycle"));
      series[1].push_back(r.at("disc"));
      series[2].push_back(r.at("gp"));
    }
    img::Chart chart;
    if (!steps.empty()) {
      chart.x_lo = steps.front();
      chart.x_hi = steps.back();
      double lo = 0.0, hi = 0.0;
      for (const auto& s : series)
        for (double v : s)
          if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
      chart.y_lo = lo;
      chart.y_hi = hi > lo ? hi : lo + 1.0;
    }
    const fs::path f = out / "loss_curves.png";
    img::line_chart(steps, series, chart).write_png(f);
    files.push_back(f);
  }

  const auto checkpoints = m.value("checkpoints", nlohmann::json::array());
  if (!checkpoints.empty()) {
    const Prepared p = read_dataset(artifact(base, m, "dataset"));
    const auto& t = p.data.test;
    if (t.truth.empty()) throw FileError("dataset has no test images to plot");
    const Tensor in = t.measurement.slice_batch(0, 1), truth = t.truth.slice_batch(0, 1);
    for (const auto& entry : checkpoints) {
      const fs::path dir = base / entry.get<std::string>();
      if (!fs::exists(dir / "manifest.json"))
        throw FileError("file not found for manifest entry 'checkpoints': " + dir.string());
      train::Components c = train::build_components(p.cfg, p.physics, p.seeds.init());
      train::load_checkpoint(c, dir);
      const Tensor outimg = (*c.G)(in);
      const int s = truth.shape().h, zoom = std::max(1, 128 / s);
      img::Canvas canvas(3 * s * zoom + 4 * 8, s * zoom + 16);
      const auto plane = [&](const Tensor& x) { return plane_of(x, 0).storage(); };
      const auto ref = plane(truth);
      const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
      int x0 = 8;
      for (const Tensor* img : {&in, &outimg, &truth}) {
        canvas.image(plane(*img), s, s, x0, 8, zoom, *lo, *hi);
        x0 += s * zoom + 8;
      }
      const fs::path f = out / ("triptych_" + dir.filename().string() + ".png");
      canvas.write_png(f);
      files.push_back(f);
    }
  }

  if (m.contains("evaluation")) {
    const auto ev = io::read_json(artifact(base, m, "evaluation"));
    if (ev.contains("frc")) {
      const auto curve = ev["frc"]["curve"].get<std::vector<double>>();
      std::vector<double> x(curve.size());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
      img::Chart chart;
      chart.x_lo = 0.0;
      chart.x_hi = std::max(1.0, static_cast<double>(curve.size() - 1));
      chart.y_lo = -0.2;
      chart.y_hi = 1.05;
      const double threshold = ev["frc"].value("threshold", 1.0 / 7.0);
      const fs::path f = out / "frc.png";
      img::line_chart(x, {curve}, chart, &threshold).write_png(f);
      files.push_back(f);
    }
  }
  return files;
}

}  // namespace otcg::experiment
