#include "rdist/core/types.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace rdist {

Resolution::Resolution(int h, int w) : height(h), width(w) {
  if (h < 8 || w < 8) throw ContractError(fmt::format("resolution {}x{} below the 8x8 minimum", h, w));
}

void Resolution::require_divisible(int f) const {
  if (!divisible_by(f)) {
    throw ContractError(fmt::format("resolution {} is not divisible by {}", str(), f));
  }
}

std::string Resolution::str() const { return fmt::format("{}x{}", height, width); }

ScaleFactor::ScaleFactor(double s) : s_(s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ContractError(fmt::format("scale factor must be > 0, got {}", s));
}

Resolution ScaleFactor::apply(const Resolution& r) const {
  auto snap = [this](int side) {
    const double scaled = side * s_ / kDownsampleFactor;
    return std::max(1, static_cast<int>(std::lround(scaled))) * kDownsampleFactor;
  };
  return Resolution(snap(r.height), snap(r.width));
}

std::string ScaleFactor::str() const { return fmt::format("{:g}", s_); }

std::string_view to_string(ValueRange r) { return r == ValueRange::kUnit ? "unit" : "symmetric"; }

ValueRange value_range_from_string(std::string_view s) {
  if (s == "unit") return ValueRange::kUnit;
  if (s == "symmetric") return ValueRange::kSymmetric;
  throw ContractError(fmt::format("unknown value range '{}'", s));
}

ImageBatch::ImageBatch(Tensor data, ValueRange range) : data_(std::move(data)), range_(range) {}

void ImageBatch::require_range(ValueRange expected) const {
  if (range_ != expected) {
    throw ContractError(fmt::format("image batch is in {} range, expected {}", to_string(range_),
                                    to_string(expected)));
  }
}

std::string_view to_string(LatentSource s) {
  switch (s) {
    case LatentSource::kTeacherSampled: return "teacher_sampled";
    case LatentSource::kTeacherMean: return "teacher_mean";
    case LatentSource::kStudent: return "student";
    case LatentSource::kDerived: return "derived";
  }
  return "unknown";
}

LatentBatch::LatentBatch(Tensor data, LatentSource source) : data_(std::move(data)), source_(source) {
  if (data_.c() != kLatentChannels) {
    throw ContractError(fmt::format("latent batch needs {} channels, got {}", kLatentChannels, data_.c()));
  }
  if (!data_.all_finite()) throw ContractError("latent batch contains non-finite values");
}

ImageBatch convert_range(const ImageBatch& batch, ValueRange target) {
  if (batch.range() == target) return batch;
  Tensor out = batch.data();
  if (target == ValueRange::kSymmetric) {
    for (float& v : out.values()) v = 2.0f * v - 1.0f;
  } else {
    for (float& v : out.values()) v = 0.5f * (v + 1.0f);
  }
  return ImageBatch(std::move(out), target);
}

}  // namespace rdist
