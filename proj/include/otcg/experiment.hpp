#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "otcg/config.hpp"
#include "otcg/datasets.hpp"
#include "otcg/metrics.hpp"
#include "otcg/trainer.hpp"

namespace otcg::experiment {

namespace fs = std::filesystem;

/// Physics and data for one config, with flips applied to the training pools.
struct Prepared {
  config::ExperimentConfig cfg;
  SeedHierarchy seeds;
  physics::ForwardOperator physics;
  data::SyntheticData data;
};

Prepared prepare(const config::ExperimentConfig& cfg);
physics::ForwardOperator build_physics(const config::ExperimentConfig& cfg);

/// x_pool / y_pool / test_* containers plus dataset.json {config, seed, config_hash}.
void write_dataset(const fs::path& dir, const Prepared& p);
Prepared read_dataset(const fs::path& dir);

struct TrainResult {
  train::Components components;
  std::vector<train::LogRecord> log;
  std::vector<fs::path> checkpoints;
  double seconds = 0.0;
};

/// Builds components from the init seed and trains on the prepared pools.
/// With a non-empty `out`, writes loss_log.jsonl and checkpoints there.
TrainResult train(const Prepared& p, const fs::path& out = {});

struct Evaluation {
  std::optional<metrics::MetricReport> output;  // absent for untrained runs
  metrics::MetricReport baseline;               // network input vs truth
  std::optional<double> kernel_ncc;             // variant b
  std::optional<metrics::FrcCurve> frc;         // first test image, two noise draws
};

Evaluation evaluate(train::Components& c, const Prepared& p, bool trained = true);
nlohmann::json to_json(const Evaluation& e);
/// Structured report plus a per-image CSV table next to it.
void write_evaluation(const Evaluation& e, const fs::path& report, const std::vector<std::string>& metrics);

/// True PSF resampled to the learned kernel's size, for variant b.
Tensor reference_psf(const config::ExperimentConfig& cfg);

/// Run directory for a config: root/<name>-<hash>.
fs::path run_dir(const config::ExperimentConfig& cfg, const fs::path& root);

/// train (and optionally evaluate) prepared data under run_dir; writes and
/// returns manifest.json. epochs = 0 records baseline metrics only.
nlohmann::json run_experiment(const Prepared& p, const fs::path& root, bool with_evaluation = true);
nlohmann::json run_experiment(const config::ExperimentConfig& cfg, const fs::path& root);

/// Loss curves, one triptych per checkpoint, FRC curve when available.
std::vector<fs::path> plot(const fs::path& manifest_path);

}  // namespace otcg::experiment
