#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdist/core/config.hpp"
#include "rdist/data/dataset.hpp"
#include "rdist/distill/losses.hpp"
#include "rdist/student/student_encoder.hpp"
#include "rdist/teacher/autoencoder.hpp"

namespace rdist {

struct TrainRecord {
  long long step = 0;  // 1-based, continues across stages
  int stage = 0;
  double loss = 0.0;
  std::map<std::string, double> terms;
  double lr = 0.0;

  nlohmann::json to_json() const;
  static TrainRecord from_json(const nlohmann::json& j);
};

/// Append-only JSONL training log. Wall time goes to a separate `.timing.jsonl` sidecar so the
/// log itself stays reproducible.
class TrainLog {
 public:
  explicit TrainLog(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path timing_path() const;
  void append(const TrainRecord& r, double wall_ms);
  /// Drops records after `step` (used when resuming from an older checkpoint).
  void truncate_after(long long step);
  void reset();
  std::vector<TrainRecord> records() const;

 private:
  std::filesystem::path path_;
};

/// Raised when a step produces a non-finite loss. The pre-step weights are saved first.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct DistillOptions {
  std::filesystem::path output_dir;
  int checkpoint_every = 1000;
  bool resume = false;
  std::uint64_t seed = 0;
  PerceptualPtr perceptual;
};

DistillOptions distill_options(const RunConfig& cfg);

struct DistillResult {
  std::vector<TrainRecord> log;  // records produced by this call
  std::filesystem::path final_checkpoint;
  long long resumed_from = 0;
};

/// Trains `student` in place against the frozen teacher, stage by stage.
///
/// Layout under output_dir: train_log.jsonl, checkpoints/step_<k>.rdck, checkpoints/student_final.rdck.
/// Resuming picks the newest step checkpoint, restores optimizer state, and continues at k+1.
DistillResult distill(StudentEncoder& student, const TeacherPtr& teacher, const std::vector<TrainStage>& stages,
                      const LossSpec& loss, const DatasetSpec& data, const DistillOptions& opts);

struct ScratchResult {
  std::shared_ptr<AutoencoderModel> model;
  std::vector<TrainRecord> log;
  std::filesystem::path final_checkpoint;
};

/// Trains a VAE (reconstruction MSE + kl_weight * KL to a unit Gaussian) at one resolution.
/// Writes under output_dir: scratch_log.jsonl, checkpoints/scratch_step_<k>.rdae, checkpoints/scratch_vae.rdae.
ScratchResult train_scratch_autoencoder(const AutoencoderConfig& cfg, const DatasetSpec& data, const TrainStage& stage,
                                        const DistillOptions& opts);

/// Latest `<prefix><step>.<ext>` in `dir`, or empty.
std::filesystem::path latest_checkpoint(const std::filesystem::path& dir, const std::string& prefix);

}  // namespace rdist
