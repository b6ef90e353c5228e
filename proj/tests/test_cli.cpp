#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "otcg/experiment.hpp"
#include "otcg/tensor_io.hpp"
#include "support.hpp"
#include "tiny.hpp"

namespace fs = std::filesystem;
using otcg::test::fresh_dir;
using otcg::test::tiny_json;

namespace {

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_out.txt";
  const std::string cmd = std::string(OTCG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "cfg.json") {
  otcg::io::write_json(dir / name, j);
  return dir / name;
}

}  // namespace

TEST_CASE("verify-ot prints one line per instance and a summary") {
  const auto dir = fresh_dir("cli_verify");
  const auto ok = cli("verify-ot --instances 3 --seed 0", dir);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("instance=2 ") != std::string::npos);
  CHECK(ok.out.find("summary instances=3 failed=0") != std::string::npos);

  // Seed 5 draws an instance whose upper bound does not hold.
  const auto bad = cli("verify-ot --instances 3 --seed 5", dir);
  CHECK(bad.code == 4);
  CHECK(bad.out.find("FAIL") != std::string::npos);

  CHECK(cli("verify-ot --instances 0", dir).code == 2);
}

TEST_CASE("configuration errors exit with 2") {
  const auto dir = fresh_dir("cli_config");
  auto j = tiny_json('b');
  j["optimizer"]["n_critic"] = 0;
  const auto bad = cli("train --config " + write_config(dir, j).string() + " --out " + (dir / "runs").string(), dir);
  CHECK(bad.code == 2);
  CHECK(bad.out.find("optimizer.n_critic") != std::string::npos);

  CHECK(cli("train --config " + (dir / "missing.json").string() + " --out x", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("train --config x --variant e --out y", dir).code == 2);
  // Variant c on a learnable-kernel problem.
  CHECK(cli("train --config " + write_config(dir, tiny_json('b')).string() + " --variant c --out y", dir).code == 2);
}

TEST_CASE("numerical failure exits with 3") {
  const auto dir = fresh_dir("cli_nan");
  auto j = tiny_json('d');
  j["optimizer"]["lr"] = 1e300;
  j["optimizer"]["epochs"] = 3;
  const auto r = cli("train --config " + write_config(dir, j).string() + " --out " + (dir / "runs").string(), dir);
  CHECK(r.code == 3);
}

TEST_CASE("generate, train, evaluate and plot compose") {
  const auto dir = fresh_dir("cli_pipeline");
  auto j = tiny_json('c');
  j["checkpoint_every"] = 1;
  j["evaluation"]["frc"] = true;
  const auto cfg_path = write_config(dir, j);
  const auto data = dir / "data", runs = dir / "runs";

  REQUIRE(cli("generate-data --spec " + cfg_path.string() + " --out " + data.string(), dir).code == 0);
  CHECK(fs::exists(data / "dataset.json"));
  CHECK(fs::exists(data / "mask.bin"));

  const auto tr = cli("train --config " + cfg_path.string() + " --data " + data.string() + " --out " + runs.string(), dir);
  REQUIRE(tr.code == 0);
  const fs::path run = otcg::experiment::run_dir(otcg::config::from_json(j), runs);
  const auto manifest = otcg::io::read_json(run / "manifest.json");
  REQUIRE(!manifest["checkpoints"].empty());
  const fs::path ckpt = run / manifest["checkpoints"].back().get<std::string>();

  const auto ev = cli("evaluate --checkpoint " + ckpt.string() + " --dataset " + data.string() +
                          " --metrics psnr,ssim,frc --out " + (dir / "eval/report.json").string(),
                      dir);
  REQUIRE(ev.code == 0);
  const auto report = otcg::io::read_json(dir / "eval/report.json");
  CHECK(report["output"]["psnr_db"]["median"].is_number());
  CHECK(report.contains("frc"));
  CHECK(fs::exists(dir / "eval/report.csv"));

  CHECK(cli("evaluate --checkpoint " + ckpt.string() + " --dataset " + data.string() + " --metrics psnr,lpips --out " +
                (dir / "r.json").string(),
            dir)
            .code == 2);

  const auto pl = cli("plot --manifest " + (run / "manifest.json").string(), dir);
  CHECK(pl.code == 0);
  CHECK(fs::exists(run / "plots/loss_curves.png"));

  // A dataset from other data settings is refused.
  auto other = j;
  other["data"]["count"] = 12;
  CHECK(cli("train --config " + write_config(dir, other, "other.json").string() + " --data " + data.string() +
                " --out " + runs.string(),
            dir)
            .code == 2);
}
