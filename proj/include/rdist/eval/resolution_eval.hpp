#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdist/data/dataset.hpp"
#include "rdist/data/resize.hpp"
#include "rdist/metrics/metrics.hpp"
#include "rdist/teacher/teacher.hpp"

namespace rdist {

enum class RemapPosition { kPre, kPost, kNone };
std::string_view to_string(RemapPosition p);
RemapPosition remap_position_from_string(std::string_view s);

struct RemapProtocol {
  ScaleFactor scale;
  ResizeMethod method = ResizeMethod::kBilinear;
  RemapPosition position = RemapPosition::kPre;
  bool antialias_down = true;

  nlohmann::json to_json() const;
  /// Short digest of method, position, and antialias flag (scale excluded).
  std::string hash() const;
};

using EncodeFn = std::function<LatentBatch(const ImageBatch&)>;
using DecodeFn = std::function<ImageBatch(const LatentBatch&)>;

/// pre:  x -> resize(s) -> encode -> decode -> resize back
/// post: x -> encode -> decode -> resize(s) -> resize back
/// none: x -> encode -> decode
/// The result always has x's resolution.
ImageBatch remap_roundtrip(const EncodeFn& encode, const DecodeFn& decode, const ImageBatch& x, const RemapProtocol& proto);

struct EvalRecord {
  std::string model_id;
  ScaleFactor scale;
  RemapProtocol protocol;
  Resolution target;   // metric resolution
  Resolution encoded;  // resolution seen by the encoder
  bool ok = true;
  std::string error;
  MetricReport report;

  std::string key() const;
  nlohmann::json to_json() const;
  static EvalRecord from_json(const nlohmann::json& j);
};

struct SweepModel {
  std::string id;
  EncodeFn encode;
  DecodeFn decode;
};

/// Teacher pair using the mean latent.
SweepModel teacher_sweep_model(const std::string& id, TeacherPtr teacher);

struct SweepOptions {
  Resolution resolution = Resolution::square(256);
  int batch_size = 8;
  MetricOptions metrics;
  /// JSONL store. Completed (model, scale, protocol) cells found here are not recomputed.
  std::optional<std::filesystem::path> records_path;
};

/// One record per (model, scale), ordered by model then scale. Failures are recorded, not thrown.
std::vector<EvalRecord> sweep(const std::vector<SweepModel>& models, const SubsetManifest& data,
                              const std::vector<ScaleFactor>& scales, const RemapProtocol& proto_base,
                              const SweepOptions& opts);

std::vector<EvalRecord> load_records(const std::filesystem::path& path);

bool lower_is_better(const std::string& metric);

/// Best scale for `metric` among successful records; ties go to the smaller scale.
ScaleFactor find_sweet_spot(const std::vector<EvalRecord>& records, const std::string& metric);

struct BenchRecord {
  std::string model_id;
  Resolution resolution;
  int n_iter = 0;
  int warmup = 0;
  double ms_per_image = 0.0;
  std::size_t parameter_count = 0;
  std::size_t parameter_bytes = 0;
  std::optional<double> peak_accelerator_mb;  // unset on CPU
  double peak_rss_mb = 0.0;

  nlohmann::json to_json() const;
};

/// Times `encode` on a fixed batch-1 input; warmup iterations are discarded.
BenchRecord benchmark(const std::string& model_id, const EncodeFn& encode, const Resolution& resolution, int n_iter,
                      int warmup, std::size_t parameter_count);

}  // namespace rdist
