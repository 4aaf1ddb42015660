#include "rdist/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rdist/core/archive.hpp"
#include "rdist/core/hash.hpp"
#include "rdist/core/rng.hpp"
#include "rdist/data/image_io.hpp"
#include "rdist/data/resize.hpp"

namespace rdist {

namespace fs = std::filesystem;

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "val"; }

fs::path DatasetSpec::split_dir() const {
  const fs::path sub = root / std::string(to_string(split));
  return fs::is_directory(sub) ? sub : root;
}

std::string SubsetManifest::compute_checksum(const std::vector<std::string>& entries) {
  Sha256 h;
  for (const auto& e : entries) h.update(e).update("\n");
  return h.hex();
}

void SubsetManifest::save(const fs::path& path) const {
  std::string text;
  for (const auto& e : entries) text += e + "\n";
  write_text_atomic(path, text);
  auto sidecar = path;
  sidecar += ".sha256";
  write_text_atomic(sidecar, fmt::format("{}  seed={}\n", checksum, seed));
}

SubsetManifest SubsetManifest::load(const fs::path& path, const fs::path& base_dir) {
  if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path.string());
  SubsetManifest m;
  m.base_dir = base_dir;
  m.entries = read_lines(path);
  m.checksum = compute_checksum(m.entries);
  auto sidecar = path;
  sidecar += ".sha256";
  const auto side = read_lines(sidecar);
  if (side.empty()) throw std::runtime_error("manifest checksum sidecar missing: " + sidecar.string());
  const std::string& line = side.front();
  const std::string stored = line.substr(0, line.find(' '));
  if (stored != m.checksum) throw std::runtime_error("manifest checksum mismatch for " + path.string());
  if (const auto pos = line.find("seed="); pos != std::string::npos) m.seed = std::stoull(line.substr(pos + 5));
  return m;
}

std::vector<std::string> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset root does not exist: " + dir.string());
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      out.push_back(fs::relative(entry.path(), dir).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

SubsetManifest full_manifest(const DatasetSpec& spec) {
  SubsetManifest m;
  m.base_dir = spec.split_dir();
  m.entries = list_images(m.base_dir);
  if (m.entries.empty()) throw std::runtime_error("empty dataset at " + m.base_dir.string());
  m.seed = spec.subset_seed;
  m.checksum = SubsetManifest::compute_checksum(m.entries);
  return m;
}

SubsetManifest make_eval_subset(const DatasetSpec& spec) {
  if (spec.split != Split::kVal) throw ContractError("eval subsets are drawn from the val split");
  if (spec.eval_subset_size <= 0) throw ContractError("eval_subset_size must be positive");
  std::vector<std::string> population = list_images(spec.split_dir());
  if (static_cast<std::size_t>(spec.eval_subset_size) > population.size()) {
    throw ContractError(fmt::format("eval subset of {} exceeds population of {}", spec.eval_subset_size,
                                    population.size()));
  }
  Rng rng = make_rng(spec.subset_seed, "eval_subset");
  for (std::size_t i = population.size(); i > 1; --i) {
    std::swap(population[i - 1], population[rng.below(i)]);
  }
  population.resize(static_cast<std::size_t>(spec.eval_subset_size));
  SubsetManifest m;
  m.base_dir = spec.split_dir();
  m.entries = std::move(population);
  m.seed = spec.subset_seed;
  m.checksum = SubsetManifest::compute_checksum(m.entries);
  return m;
}

Tensor load_image_at(const fs::path& path, const Resolution& res) {
  Tensor img = center_crop_square(read_image(path));
  ImageBatch b(std::move(img), ValueRange::kUnit);
  return resize_images(b, res, ResizeMethod::kBilinear).data();
}

ImageLoader::ImageLoader(SubsetManifest manifest, Resolution resolution, int batch_size, bool shuffle,
                         std::uint64_t seed, bool cycle)
    : manifest_(std::move(manifest)),
      resolution_(resolution),
      batch_size_(batch_size),
      shuffle_(shuffle),
      seed_(seed),
      cycle_(cycle) {
  if (manifest_.entries.empty()) throw std::runtime_error("empty dataset");
  if (batch_size_ < 1) throw ContractError("batch_size must be >= 1");
  start_epoch();
}

void ImageLoader::start_epoch() {
  ++epoch_;
  pos_ = 0;
  order_.resize(manifest_.entries.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle_) {
    Rng rng = make_rng(seed_, "loader_shuffle", static_cast<std::uint64_t>(epoch_));
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  }
}

void ImageLoader::skip(long long batches) {
  for (long long b = 0; b < batches; ++b) {
    if (pos_ >= order_.size()) {
      if (!cycle_) return;
      start_epoch();
    }
    pos_ = std::min(order_.size(), pos_ + static_cast<std::size_t>(batch_size_));
  }
}

std::optional<ImageBatch> ImageLoader::next() {
  if (pos_ >= order_.size()) {
    if (!cycle_) return std::nullopt;
    start_epoch();
  }
  std::vector<Tensor> images;
  const std::size_t end = std::min(order_.size(), pos_ + static_cast<std::size_t>(batch_size_));
  for (; pos_ < end; ++pos_) {
    const fs::path path = manifest_.base_dir / manifest_.entries[order_[pos_]];
    try {
      images.push_back(load_image_at(path, resolution_));
    } catch (const DecodeError& e) {
      ++skipped_files_;
      spdlog::warn("skipping undecodable image {}", e.what());
    }
  }
  if (images.empty()) {
    if (skipped_files_ >= manifest_.entries.size()) throw std::runtime_error("no decodable images in dataset");
    return next();
  }
  ImageBatch unit(Tensor::concat_batch(images), ValueRange::kUnit);
  return convert_range(unit, ValueRange::kSymmetric);
}

ImageLoader build_loader(const DatasetSpec& spec, int batch_size, bool shuffle) {
  return ImageLoader(full_manifest(spec), spec.base_resolution, batch_size, shuffle, spec.subset_seed);
}

ImageBatch load_all(const SubsetManifest& manifest, const Resolution& res) {
  ImageLoader loader(manifest, res, static_cast<int>(std::max<std::size_t>(1, manifest.size())), false, 0);
  auto batch = loader.next();
  if (!batch) throw std::runtime_error("empty manifest");
  return *batch;
}

Tensor make_synthetic_images(int count, int side, std::uint64_t seed) {
  Tensor out(Shape{count, 3, side, side});
  for (int n = 0; n < count; ++n) {
    Rng rng = make_rng(seed, "synthetic_image", static_cast<std::uint64_t>(n));
    float c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
      c0[c] = static_cast<float>(0.15 + 0.7 * rng.uniform());
      c1[c] = static_cast<float>(0.15 + 0.7 * rng.uniform());
    }
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    const double dx = std::cos(angle), dy = std::sin(angle);

    struct Blob {
      double cx, cy, sigma, color[3], amp;
    };
    std::vector<Blob> blobs(3 + rng.below(4));
    for (auto& b : blobs) {
      b.cx = rng.uniform() * side;
      b.cy = rng.uniform() * side;
      b.sigma = side * (0.04 + 0.18 * rng.uniform());
      for (double& v : b.color) v = rng.uniform();
      b.amp = 0.4 + 0.5 * rng.uniform();
    }
    const double freq = 2.0 + 6.0 * rng.uniform();
    const double g_angle = std::numbers::pi * rng.uniform();
    const double gx = std::cos(g_angle), gy = std::sin(g_angle);
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double g_amp = 0.06 + 0.1 * rng.uniform();

    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double u = (x + 0.5) / side - 0.5;
        const double v = (y + 0.5) / side - 0.5;
        const double t = std::clamp(0.5 + (u * dx + v * dy), 0.0, 1.0);
        const double grating = g_amp * std::sin(2.0 * std::numbers::pi * freq * (u * gx + v * gy) + phase);
        for (int c = 0; c < 3; ++c) {
          double val = (1.0 - t) * c0[c] + t * c1[c] + grating;
          for (const auto& b : blobs) {
            const double r2 = (x + 0.5 - b.cx) * (x + 0.5 - b.cx) + (y + 0.5 - b.cy) * (y + 0.5 - b.cy);
            const double wgt = b.amp * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
            val = (1.0 - wgt) * val + wgt * b.color[c];
          }
          out.at(n, c, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
  }
  return out;
}

void write_synthetic_dataset(const fs::path& root, int count, int side, std::uint64_t seed) {
  const Tensor train = make_synthetic_images(count, side, seed);
  const Tensor val = make_synthetic_images(count, side, seed + 1000003);
  for (int i = 0; i < count; ++i) {
    write_png(root / "train" / fmt::format("img_{:05d}.png", i), train, i);
    write_png(root / "val" / fmt::format("img_{:05d}.png", i), val, i);
  }
}

}  // namespace rdist
