#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rdist/core/config.hpp"
#include "rdist/data/dataset.hpp"
#include "rdist/student/student_encoder.hpp"
#include "rdist/teacher/teacher.hpp"

namespace rdist::app {

/// Command names accepted by run_command.
const std::vector<std::string>& command_names();

/// Runs one command against a resolved config. Artifacts go under cfg.output_dir and a
/// `manifest_<command>.json` (config snapshot, seed, code version) is written first.
/// Throws ConfigError for bad settings; anything else is a runtime failure.
void run_command(const std::string& command, const RunConfig& cfg);

/// Parses argv, runs the command, and maps failures to exit codes:
/// 0 success, 1 configuration error, 2 runtime failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

// Helpers shared by the commands. Exposed for tests.

/// Generates the synthetic dataset when data.root is missing and data.synthetic_count > 0.
void ensure_dataset(const RunConfig& cfg);
TeacherPtr build_teacher(const RunConfig& cfg);
/// eval.student_checkpoint, or <output_dir>/checkpoints/student_final.rdck.
std::filesystem::path student_checkpoint_path(const RunConfig& cfg);
/// Persisted validation subset under <output_dir>/eval_subset.txt (created on first use).
SubsetManifest eval_manifest(const RunConfig& cfg);

}  // namespace rdist::app
