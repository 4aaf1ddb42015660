#pragma once

#include <filesystem>
#include <stdexcept>

#include "rdist/core/tensor.hpp"

namespace rdist {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes PNG, JPEG, or binary PPM/PGM into a (1,3,H,W) tensor in [0,1]. Gray is replicated.
Tensor read_image(const std::filesystem::path& path);

/// Writes image `index` of a [0,1] tensor as 8-bit RGB PNG. Values are clamped.
void write_png(const std::filesystem::path& path, const Tensor& images, int index = 0);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace rdist
