#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "rdist/core/tensor.hpp"

namespace rdist {

/// Channel count of every latent in this toolkit (teacher mean half, student output).
inline constexpr int kLatentChannels = 16;
/// Spatial reduction between an image and its latent grid.
inline constexpr int kDownsampleFactor = 8;

class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spatial extent of a latent grid (no minimum size).
struct Grid {
  int h = 0;
  int w = 0;
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Image resolution; both dims >= 8.
struct Resolution {
  int height = 0;
  int width = 0;

  Resolution() = default;
  Resolution(int h, int w);
  static Resolution square(int side) { return Resolution(side, side); }

  bool divisible_by(int f) const { return height % f == 0 && width % f == 0; }
  /// Throws ContractError unless both dims are multiples of `f`. Non-divisible inputs are rejected, never padded.
  void require_divisible(int f) const;
  Grid latent_grid() const { return Grid{height / kDownsampleFactor, width / kDownsampleFactor}; }
  std::string str() const;

  friend bool operator==(const Resolution&, const Resolution&) = default;
  friend auto operator<=>(const Resolution& a, const Resolution& b) {
    if (auto c = a.height * a.width <=> b.height * b.width; c != 0) return c;
    if (auto c = a.height <=> b.height; c != 0) return c;
    return a.width <=> b.width;
  }
};

/// Positive input scale used by the remapped evaluation protocol.
class ScaleFactor {
 public:
  ScaleFactor() = default;
  explicit ScaleFactor(double s);
  double value() const { return s_; }
  /// Scaled resolution rounded to the nearest multiple of 8 (minimum 8).
  Resolution apply(const Resolution& r) const;
  std::string str() const;

  friend bool operator==(const ScaleFactor&, const ScaleFactor&) = default;
  friend auto operator<=>(const ScaleFactor&, const ScaleFactor&) = default;

 private:
  double s_ = 1.0;
};

enum class ValueRange { kUnit, kSymmetric };

std::string_view to_string(ValueRange r);
ValueRange value_range_from_string(std::string_view s);

/// Images with explicit value-range metadata. Resolution is read off the tensor.
class ImageBatch {
 public:
  ImageBatch() = default;
  ImageBatch(Tensor data, ValueRange range);

  const Tensor& data() const { return data_; }
  Tensor& mutable_data() { return data_; }
  ValueRange range() const { return range_; }
  Resolution resolution() const { return Resolution(data_.h(), data_.w()); }
  int size() const { return data_.n(); }
  int channels() const { return data_.c(); }

  /// Throws ContractError if the batch is not in `expected`.
  void require_range(ValueRange expected) const;

 private:
  Tensor data_;
  ValueRange range_ = ValueRange::kUnit;
};

enum class LatentSource { kTeacherSampled, kTeacherMean, kStudent, kDerived };

std::string_view to_string(LatentSource s);

/// Latent codes with exactly kLatentChannels channels and finite values.
class LatentBatch {
 public:
  LatentBatch() = default;
  LatentBatch(Tensor data, LatentSource source);

  const Tensor& data() const { return data_; }
  LatentSource source() const { return source_; }
  Grid grid() const { return Grid{data_.h(), data_.w()}; }
  int size() const { return data_.n(); }

 private:
  Tensor data_;
  LatentSource source_ = LatentSource::kDerived;
};

/// Affine map between [0,1] and [-1,1]; identity when already in `target`.
ImageBatch convert_range(const ImageBatch& batch, ValueRange target);

}  // namespace rdist
