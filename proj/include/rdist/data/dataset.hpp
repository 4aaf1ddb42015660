#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rdist/core/types.hpp"

namespace rdist {

enum class Split { kTrain, kVal };
std::string_view to_string(Split s);

struct DatasetSpec {
  std::filesystem::path root;
  Split split = Split::kTrain;
  Resolution base_resolution = Resolution::square(256);
  int eval_subset_size = 50000;
  std::uint64_t subset_seed = 0;

  /// root/<split> when that folder exists, else root.
  std::filesystem::path split_dir() const;
};

/// Ordered image list. Persisted as one relative path per line plus a `.sha256` sidecar.
struct SubsetManifest {
  std::filesystem::path base_dir;
  std::vector<std::string> entries;
  std::uint64_t seed = 0;
  std::string checksum;

  static std::string compute_checksum(const std::vector<std::string>& entries);
  void save(const std::filesystem::path& path) const;
  /// Verifies the sidecar checksum.
  static SubsetManifest load(const std::filesystem::path& path, const std::filesystem::path& base_dir);
  std::size_t size() const { return entries.size(); }
};

/// Sorted relative paths of decodable-looking files under `dir` (flat or class subfolders).
std::vector<std::string> list_images(const std::filesystem::path& dir);

/// Every image under the split folder, sorted. Used for training sets.
SubsetManifest full_manifest(const DatasetSpec& spec);

/// Fisher-Yates permutation under subset_seed, first eval_subset_size entries. Requires split == val.
SubsetManifest make_eval_subset(const DatasetSpec& spec);

/// Decode + center-crop + resize to `res` in [0,1]. Throws DecodeError.
Tensor load_image_at(const std::filesystem::path& path, const Resolution& res);

/// Batches over a manifest in [-1,1] at a fixed resolution.
///
/// Order is a seed-determined permutation per epoch when shuffling. Files that fail to
/// decode are skipped with a warning. `cycle` restarts with a fresh epoch when exhausted.
class ImageLoader {
 public:
  ImageLoader(SubsetManifest manifest, Resolution resolution, int batch_size, bool shuffle, std::uint64_t seed,
              bool cycle = false);

  std::optional<ImageBatch> next();
  /// Advances past `batches` batches without decoding (resume support).
  void skip(long long batches);
  int epoch() const { return epoch_; }
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t skipped_files() const { return skipped_files_; }

 private:
  void start_epoch();

  SubsetManifest manifest_;
  Resolution resolution_;
  int batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
  bool cycle_;
  int epoch_ = -1;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
  std::size_t skipped_files_ = 0;
};

ImageLoader build_loader(const DatasetSpec& spec, int batch_size, bool shuffle);

/// Loads every manifest entry at `res` into one [-1,1] batch (skipping undecodable files).
ImageBatch load_all(const SubsetManifest& manifest, const Resolution& res);

/// Procedural RGB test images in [0,1]: blobs, gratings, and a color ramp.
Tensor make_synthetic_images(int count, int side, std::uint64_t seed);

/// Writes `count` synthetic PNGs into root/train and root/val (disjoint seeds).
void write_synthetic_dataset(const std::filesystem::path& root, int count, int side, std::uint64_t seed);

}  // namespace rdist
