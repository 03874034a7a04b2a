#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "baris_cli_test.log";
  const std::string cmd = std::string(BARIS_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WEXITSTATUS(rc);
  std::ifstream f(log, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("baris_cli_" + tag);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const std::string kSmallScene = " --set scene.height=32 --set scene.width=32";
const std::string kSmallModel =
    " --set decoder.channels=4 --set decoder.num_refine_blocks=1";

}  // namespace

TEST_CASE("gen-data writes a manifest even for zero scenes") {
  fs::path out = temp_dir("empty");
  auto r = run_cli("gen-data --out " + out.string() + " --count 0");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "resolved.json"));
}

TEST_CASE("gen-data reruns are byte-identical") {
  fs::path a = temp_dir("rerun_a");
  fs::path b = temp_dir("rerun_b");
  const std::string flags = " --count 3 --seed 17" + kSmallScene;
  CHECK(run_cli("gen-data --out " + a.string() + flags).exit_code == 0);
  CHECK(run_cli("gen-data --out " + b.string() + flags).exit_code == 0);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    INFO("file ", rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
  }
}

TEST_CASE("unknown config keys fail with a line number") {
  fs::path cfg = fs::temp_directory_path() / "baris_cli_bad.ini";
  {
    std::ofstream f(cfg);
    f << "[train]\n";
    f << "epochs = 2\n";
    f << "epoochs = 3\n";
  }
  fs::path out = temp_dir("badcfg");
  auto r = run_cli("gen-data --out " + out.string() + " --count 0 --config " + cfg.string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find(":3") != std::string::npos);
  CHECK(r.output.find("epoochs") != std::string::npos);
}

TEST_CASE("freeze era without adapters is rejected") {
  fs::path data = temp_dir("freeze_data");
  REQUIRE(run_cli("gen-data --out " + data.string() + " --count 2" + kSmallScene).exit_code == 0);
  fs::path run = temp_dir("freeze_run");
  auto r = run_cli("train --data " + data.string() + " --out " + run.string() +
                   " --freeze era --epochs 1" + kSmallScene + kSmallModel);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("freeze") != std::string::npos);
}

TEST_CASE("smoke training run exits cleanly and resolves its config") {
  fs::path data = temp_dir("smoke_data");
  REQUIRE(run_cli("gen-data --out " + data.string() + " --count 4 --seed 9" + kSmallScene)
              .exit_code == 0);
  fs::path run = temp_dir("smoke_run");
  auto r = run_cli("train --data " + data.string() + " --out " + run.string() +
                   " --epochs 1 --lr 0 --batch-size 2" + kSmallScene + kSmallModel);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(run / "metrics.jsonl"));
  CHECK(fs::exists(run / "resolved.json"));
  CHECK(fs::exists(run / "checkpoint" / "manifest.json"));
  const std::string resolved = slurp(run / "resolved.json");
  CHECK(resolved.find("\"learning_rate\": 0.0") != std::string::npos);
}

TEST_CASE("grad-check subcommand reports per-case results") {
  auto r = run_cli("grad-check --module bace --seed 2");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("all passed") != std::string::npos);
  CHECK(r.output.find("total_loss") != std::string::npos);
}

TEST_CASE("param-audit prints the reference fraction") {
  auto r = run_cli("param-audit --backbone swin-b-ref --scheme era");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("4.67%") != std::string::npos);

  auto full = run_cli("param-audit --backbone toy --scheme full");
  CHECK(full.exit_code == 0);
  CHECK(full.output.find("100.00%") != std::string::npos);

  auto bad = run_cli("param-audit --backbone toy --scheme nonsense");
  CHECK(bad.exit_code == 1);
}
