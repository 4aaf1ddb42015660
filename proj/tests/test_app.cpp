#include <doctest.h>

#include <fstream>

#include "rdist/app/commands.hpp"
#include "support.hpp"

using namespace rdist;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> base_args(const std::string& cmd, const fs::path& root) {
  return {"-q",
          cmd,
          "--set",
          "output_dir=" + (root / "run").string(),
          "--set",
          "data.root=" + (root / "data").string(),
          "--set",
          "data.synthetic_count=4",
          "--set",
          "data.synthetic_resolution=32",
          "--set",
          "data.base_resolution=16",
          "--set",
          "data.eval_subset_size=4"};
}

}  // namespace

TEST_SUITE("app") {

TEST_CASE("command table") {
  const auto& names = app::command_names();
  for (const char* c : {"distill", "train-scratch", "eval-sweep", "analyze-latents", "probe-theory", "ablate", "bench",
                        "report"}) {
    CHECK(std::find(names.begin(), names.end(), c) != names.end());
  }
}

TEST_CASE("exit codes: help, config errors, runtime failures") {
  testing::TempDir tmp("cli");
  CHECK(app::run_cli({"--help"}) == 0);
  CHECK(app::run_cli({"no-such-command"}) == 1);
  CHECK(app::run_cli(std::vector<std::string>{}) == 1);

  auto args = base_args("distill", tmp.path());
  args.insert(args.end(), {"--set", "student.hiden=3"});
  CHECK(app::run_cli(args) == 1);

  args = base_args("eval-sweep", tmp.path());
  args.insert(args.end(), {"--set", "eval.method=lanczos"});
  CHECK(app::run_cli(args) == 1);

  args = base_args("bench", tmp.path());
  args.insert(args.end(), {"--set", "device=cuda"});
  CHECK(app::run_cli(args) == 1);

  // No student checkpoint yet: a runtime failure, after the manifest was written.
  CHECK(app::run_cli(base_args("probe-theory", tmp.path())) == 2);
  CHECK(fs::exists(tmp.path() / "run" / "manifest_probe-theory.json"));
}

TEST_CASE("manifest snapshot carries config, seed, and version") {
  testing::TempDir tmp("manifest");
  auto args = base_args("make-synthetic", tmp.path());
  args.insert(args.end(), {"--set", "seed=5"});
  REQUIRE(app::run_cli(args) == 0);
  std::ifstream is(tmp.path() / "run" / "manifest_make-synthetic.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j.at("seed") == 5);
  CHECK(j.at("code_version") == RDIST_VERSION);
  CHECK(j.at("config").at("data").at("synthetic_count") == 4);
  CHECK(fs::exists(tmp.path() / "data" / "val" / "img_00003.png"));
}

TEST_CASE("short distill, eval-sweep, and report end to end") {
  testing::TempDir tmp("e2e");
  auto distill = base_args("distill", tmp.path());
  distill.insert(distill.end(), {"--set", "stages=[{\"resolution\":16,\"steps\":4,\"batch_size\":2}]", "--set",
                                 "student.hidden=4", "--set", "student.blocks_per_stage=1", "--set",
                                 "train.checkpoint_every=2"});
  REQUIRE(app::run_cli(distill) == 0);
  const fs::path run = tmp.path() / "run";
  CHECK(fs::exists(run / "checkpoints" / "step_00000002.rdck"));
  CHECK(fs::exists(run / "checkpoints" / "student_final.rdck"));

  // Resuming a finished run keeps the log intact.
  auto resume = distill;
  resume.push_back("--resume");
  REQUIRE(app::run_cli(resume) == 0);
  std::ifstream log(run / "train_log.jsonl");
  CHECK(std::count(std::istreambuf_iterator<char>(log), {}, '\n') == 4);

  auto sweep = base_args("eval-sweep", tmp.path());
  sweep.insert(sweep.end(), {"--set", "eval_scales=[1.0,2.0]", "--set", "student.hidden=4"});
  REQUIRE(app::run_cli(sweep) == 0);
  std::ifstream table(run / "eval" / "table1.csv");
  std::string line;
  int rows = 0;
  while (std::getline(table, line)) ++rows;
  CHECK(rows == 1 + 2 * 2);

  REQUIRE(app::run_cli(base_args("report", tmp.path())) == 0);
  std::ifstream report(run / "report.md");
  const std::string text((std::istreambuf_iterator<char>(report)), {});
  CHECK(text.find("eval/table1.csv") != std::string::npos);
  CHECK(text.find("checkpoints/student_final.rdck") != std::string::npos);
}

}
