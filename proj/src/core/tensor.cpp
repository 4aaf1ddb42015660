#include "rdist/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace rdist {

std::string Shape::str() const { return fmt::format("({},{},{},{})", n, c, h, w); }

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw std::invalid_argument("negative tensor dimension " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw std::invalid_argument(fmt::format("tensor {} expects {} values, got {}", shape.str(),
                                            shape.numel(), data_.size()));
  }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::slice_channels(int begin, int end) const {
  if (begin < 0 || end > shape_.c || begin >= end) {
    throw std::out_of_range(fmt::format("channel slice [{},{}) of {}", begin, end, shape_.str()));
  }
  Tensor out(Shape{shape_.n, end - begin, shape_.h, shape_.w});
  const std::size_t plane_len = shape_.plane_size();
  for (int n = 0; n < shape_.n; ++n) {
    std::copy_n(plane(n, begin), (end - begin) * plane_len, out.image(n));
  }
  return out;
}

Tensor Tensor::slice_batch(int begin, int end) const {
  if (begin < 0 || end > shape_.n || begin > end) {
    throw std::out_of_range(fmt::format("batch slice [{},{}) of {}", begin, end, shape_.str()));
  }
  Tensor out(Shape{end - begin, shape_.c, shape_.h, shape_.w});
  std::copy_n(image(begin), out.numel(), out.data());
  return out;
}

Tensor Tensor::concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(Shape{a.n(), a.c() + b.c(), a.h(), a.w()});
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.image(n), a.shape().image_size(), out.image(n));
    std::copy_n(b.image(n), b.shape().image_size(), out.image(n) + a.shape().image_size());
  }
  return out;
}

Tensor Tensor::concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor();
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw std::invalid_argument("concat_batch shape mismatch " + p.shape().str() + " vs " + s.str());
    }
    total += p.n();
  }
  s.n = total;
  Tensor out(s);
  float* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.numel(), dst);
  return out;
}

}  // namespace rdist
