#pragma once

#include <string_view>

#include "rdist/core/types.hpp"

namespace rdist {

enum class ResizeMethod { kBilinear, kBicubic, kNearest };

std::string_view to_string(ResizeMethod m);
ResizeMethod resize_method_from_string(std::string_view s);

/// Separable resampling of every plane to (out_h, out_w) with half-pixel centers.
/// With `antialias`, downsampling widens the kernel by the reduction factor.
/// Same-size input is returned unchanged. No clamping.
Tensor resize_tensor(const Tensor& x, int out_h, int out_w, ResizeMethod method, bool antialias);

/// Resizes images and clamps to the declared value range (bicubic overshoots).
ImageBatch resize_images(const ImageBatch& batch, const Resolution& target, ResizeMethod method, bool antialias);

/// Default policy: antialias only when shrinking.
ImageBatch resize_images(const ImageBatch& batch, const Resolution& target,
                         ResizeMethod method = ResizeMethod::kBilinear);

/// Largest centered square crop.
Tensor center_crop_square(const Tensor& x);

}  // namespace rdist
