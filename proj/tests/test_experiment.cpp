#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "otcg/errors.hpp"
#include "otcg/experiment.hpp"
#include "otcg/image_out.hpp"
#include "otcg/tensor_io.hpp"
#include "support.hpp"
#include "tiny.hpp"

using namespace otcg;
using namespace otcg::experiment;
using otcg::test::fresh_dir;
using otcg::test::tiny_json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool has_colour(const img::Canvas& c, img::Rgb colour) {
  for (int y = 0; y < c.height(); ++y)
    for (int x = 0; x < c.width(); ++x)
      if (c.at(x, y) == colour) return true;
  return false;
}

}  // namespace

TEST_CASE("zero epochs records baseline metrics only") {
  auto j = tiny_json('c');
  j["optimizer"]["epochs"] = 0;
  const auto root = fresh_dir("exp_baseline");
  const auto m = run_experiment(config::from_json(j), root);
  CHECK(m["metrics"].contains("baseline"));
  CHECK_FALSE(m["metrics"].contains("output"));
  CHECK_FALSE(m.contains("loss_log"));
  CHECK(m["checkpoints"].empty());
  CHECK(m["metrics"]["baseline"]["psnr_db"]["median"].is_number());
}

TEST_CASE("reruns are reproducible and land in the same directory") {
  auto j = tiny_json('b');
  j["checkpoint_every"] = 1;
  const auto cfg = config::from_json(j);
  const auto a = run_experiment(cfg, fresh_dir("exp_rerun_a")), b = run_experiment(cfg, fresh_dir("exp_rerun_b"));
  CHECK(a["metrics"] == b["metrics"]);
  CHECK(a["checkpoints"] == b["checkpoints"]);
  CHECK(a["config_hash"] == b["config_hash"]);
  CHECK(run_dir(cfg, "r").filename() == run_dir(cfg, "q").filename());
  CHECK(run_dir(cfg, "r").filename().string().find(a["config_hash"].get<std::string>()) != std::string::npos);
}

TEST_CASE("runs of different configs never share a directory") {
  std::set<std::string> dirs;
  for (char v : {'a', 'b', 'c', 'd'})
    for (int seed : {0, 1}) {
      auto j = tiny_json(v);
      j["seed"] = seed;
      dirs.insert(run_dir(config::from_json(j), "root").string());
    }
  CHECK(dirs.size() == 8);
}

TEST_CASE("artifacts written by a run") {
  auto j = tiny_json('c');
  j["checkpoint_every"] = 1;
  j["evaluation"]["frc"] = true;
  const auto root = fresh_dir("exp_artifacts");
  const auto cfg = config::from_json(j);
  const auto m = run_experiment(cfg, root);
  const auto dir = run_dir(cfg, root);
  for (const char* f : {"manifest.json", "config.json", "loss_log.jsonl", "evaluation.json", "evaluation.csv",
                        "dataset/dataset.json", "dataset/x_pool.bin", "dataset/y_pool.bin", "dataset/mask.bin",
                        "dataset/test_truth.bin", "dataset/test_measurement.bin"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  // One record per generator step, 1-based, with every loss term.
  std::istringstream log(slurp(dir / "loss_log.jsonl"));
  long expected = 1;
  for (std::string line; std::getline(log, line); ++expected) {
    const auto r = nlohmann::json::parse(line);
    CHECK(r["step"] == expected);
    for (const char* k : {"cycle", "disc", "gp", "total_g", "total_d"}) CHECK(r.contains(k));
  }
  CHECK(m["checkpoints"].size() == static_cast<std::size_t>(expected - 1));
  CHECK(m["components"].size() == 2);

  const auto x_meta = io::read_sidecar(dir / "dataset/x_pool.bin");
  CHECK(x_meta["role"] == "x_pool");
  CHECK(x_meta.contains("normalization"));

  // The stored dataset reproduces the prepared one.
  const auto back = read_dataset(dir / "dataset");
  const auto p = prepare(cfg);
  CHECK(back.data.x.images.storage() == p.data.x.images.storage());
  CHECK(back.data.test.measurement.storage() == p.data.test.measurement.storage());
  CHECK(config::hash(back.cfg) == config::hash(cfg));

  const auto plots = plot(dir / "manifest.json");
  CHECK(plots.size() == 1 + m["checkpoints"].size() + 1);
  CHECK(fs::exists(dir / "plots/loss_curves.png"));
  CHECK(has_colour(img::read_png(dir / "plots/frc.png"), img::kThreshold));
}

TEST_CASE("plot names the missing manifest entry") {
  auto j = tiny_json('b');
  const auto root = fresh_dir("exp_missing");
  const auto cfg = config::from_json(j);
  run_experiment(cfg, root);
  const auto dir = run_dir(cfg, root);
  fs::remove(dir / "loss_log.jsonl");
  try {
    plot(dir / "manifest.json");
    FAIL("expected FileError");
  } catch (const FileError& e) {
    CHECK(std::string(e.what()).find("loss_log") != std::string::npos);
  }
  CHECK_THROWS_AS(plot(dir / "nope.json"), Error);
}

TEST_CASE("variant b reports kernel correlation against the true blur") {
  auto cfg = config::from_json(tiny_json('b'));
  const Tensor psf = reference_psf(cfg);
  CHECK(psf.shape() == Shape{1, 1, 3, 3});
  CHECK(psf.sum() == doctest::Approx(1.0));
  const auto m = run_experiment(cfg, fresh_dir("exp_ncc"));
  CHECK(m["metrics"]["kernel_ncc"].is_number());
}

TEST_CASE("NaN during training leaves a dump and a NumericalError") {
  auto j = tiny_json('d');
  j["optimizer"]["lr"] = 1e300;
  j["optimizer"]["epochs"] = 3;
  const auto root = fresh_dir("exp_nan");
  CHECK_THROWS_AS(run_experiment(config::from_json(j), root), NumericalError);
  CHECK(fs::exists(run_dir(config::from_json(j), root) / "nan_dump.json"));
}
