#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rdist/app/commands.hpp"

namespace rdist::app {

namespace {

const char* describe(const std::string& cmd) {
  if (cmd == "distill") return "Train a student encoder against the frozen teacher";
  if (cmd == "train-scratch") return "Train the from-scratch VAE baseline";
  if (cmd == "eval-sweep") return "Remapped reconstruction sweep over eval_scales (table1)";
  if (cmd == "analyze-latents") return "Latent statistics, divergences, embeddings, interpolation";
  if (cmd == "probe-theory") return "Cross-resolution error decomposition";
  if (cmd == "ablate") return "Capacity, interpolation and loss ablations (table2-4)";
  if (cmd == "bench") return "Encoder latency and footprint (table5)";
  if (cmd == "report") return "Aggregate persisted artifacts into report.md";
  if (cmd == "make-synthetic") return "Write the procedural dataset to data.root";
  return "";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Resolution-aware latent distillation toolkit"};
  app.set_version_flag("--version", RDIST_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool resume = false;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("-c,--config", config_path, "JSON config file (merged over defaults)")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", overrides, "Override a config field, e.g. --set stages.0.steps=100")
        ->type_name("KEY=VALUE");
    sub->add_flag("--resume", resume, "Continue from the newest checkpoint (sets train.resume=true)");
    sub->footer("Environment: RDIST_OUTPUT_DIR and RDIST_DEVICE override output_dir and device.");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (resume) overrides.push_back("train.resume=true");
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const RunConfig cfg = load_run_config(file, overrides);
    run_command(command, cfg);
  } catch (const ConfigError& e) {
    spdlog::error("config error at {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{} failed: {}", command, e.what());
    return 2;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"rdist"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rdist::app
