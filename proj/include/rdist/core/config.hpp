#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdist/core/types.hpp"

namespace rdist {

/// Raised for malformed or unknown configuration; `field` is a dotted path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class NormKind { kGroup, kBatch, kNone };
std::string_view to_string(NormKind k);
NormKind norm_kind_from_string(std::string_view s);

struct StudentConfig {
  int in_channels = 3;
  int hidden = 32;
  int stages = 3;
  int blocks_per_stage = 4;
  int convs_per_block = 2;
  int latent_channels = kLatentChannels;
  NormKind norm = NormKind::kGroup;
  /// When false the last stride-2 conv keeps its width instead of doubling.
  bool double_last_stage = true;

  /// Throws ContractError for out-of-range fields or width overflow.
  void validate() const;
};

struct TrainStage {
  int resolution = 128;  // square side
  int steps = 10000;
  int batch_size = 64;
  double lr = 7.5e-4;
  std::string optimizer = "adam";
};

enum class LossKind { kL1, kHuber, kHuberLpips, kHuberLpipsRecon, kHuberLpipsKl };
std::string_view to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

struct LossSpec {
  LossKind kind = LossKind::kHuber;
  double beta = 0.15;
  /// Keys: l1, huber, lpips, recon, kl. Missing keys weigh 1.
  std::map<std::string, double> term_weights;
  /// Classic Huber (0.5 d^2 inside, beta * (d - 0.5 beta) outside) instead of smooth-L1.
  bool classic_huber = false;
  /// Regress the teacher mean instead of a sampled latent.
  bool mean_target = false;

  double weight(const std::string& term) const;
  void validate() const;
};

struct TeacherSpec {
  std::string kind = "toy";  // toy | external
  std::uint64_t seed = 0;
  std::string resolution_bias = "highres_sweet";  // none | highres_sweet
  std::string artifact_path;
  std::string adapter_id;
};

struct DataConfig {
  std::string root = "data";
  int base_resolution = 256;
  int eval_subset_size = 50000;
  std::uint64_t subset_seed = 0;
  /// Generated when root is missing and `synthetic_count` > 0.
  int synthetic_count = 0;
  int synthetic_resolution = 64;
};

struct TrainConfig {
  int checkpoint_every = 1000;
  bool resume = false;
};

struct EvalConfig {
  std::string method = "bilinear";
  std::string position = "pre";
  bool antialias_down = true;
  int batch_size = 8;
  std::string student_checkpoint;  // default: <output_dir>/checkpoints/student_final.rdck
  /// Extra sweep models: {id, adapter, path}.
  std::vector<std::map<std::string, std::string>> extra_models;
};

struct MetricBackends {
  std::string perceptual = "gradient-features";
  std::string features = "patch-stats";
};

struct AnalysisConfig {
  std::vector<int> resolutions = {64, 128, 256, 384, 512, 768, 1024};
  std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
  int interp_low = 128;
  int interp_high = 256;
  bool teacher_sampled = true;
  std::string reducer = "pca2";  // pca2 | none
};

struct ProbeConfig {
  int r0 = 256;
  std::vector<int> resolutions = {256, 384, 512};
  std::string method = "bilinear";
};

struct AutoencoderConfig {
  int hidden = 16;  // widest layer is hidden * 2^stages, capped by max_hidden
  int max_hidden = 128;
  int stages = 3;
  int blocks_per_stage = 2;
  double kl_weight = 1e-6;
  TrainStage stage{256, 10000, 64, 7.5e-4, "adam"};
};

struct AblateConfig {
  std::vector<std::string> studies = {"capacity", "interp", "loss"};
  std::vector<int> hidden = {16, 32, 64};
  std::vector<std::string> losses = {"l1", "huber", "huber+lpips", "huber+lpips+recon", "huber+lpips+kl"};
  double interp_scale = 1.5;
};

struct BenchConfig {
  int resolution = 256;
  int n_iter = 20;
  int warmup = 3;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string device = "cpu";
  std::string output_dir = "runs/default";
  DataConfig data;
  TeacherSpec teacher;
  StudentConfig student;
  std::vector<TrainStage> stages = {TrainStage{128, 10000, 64, 7.5e-4, "adam"},
                                    TrainStage{256, 10000, 64, 7.5e-4, "adam"}};
  LossSpec loss;
  TrainConfig train;
  std::vector<double> eval_scales = {0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
  EvalConfig eval;
  MetricBackends metric_backends;
  AnalysisConfig analysis;
  ProbeConfig probe;
  AutoencoderConfig autoencoder;
  AblateConfig ablate;
  BenchConfig bench;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict: unknown keys raise ConfigError naming the field path.
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StudentConfig& cfg);
StudentConfig student_config_from_json(const nlohmann::json& j, const std::string& path = "student");

/// Applies `a.b.c=value` overrides to a JSON document. Values parse as JSON, else as strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Loads defaults, merges the file (if given), then overrides and the RDIST_OUTPUT_DIR /
/// RDIST_DEVICE environment variables.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides = {});

}  // namespace rdist
