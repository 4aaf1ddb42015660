#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rdist {

/// Dimensions of a dense NCHW tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  std::size_t image_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense 4-axis float tensor in NCHW order. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  float* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane_size(); }
  const float* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane_size();
  }
  float* image(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.image_size(); }
  const float* image(int n) const { return data_.data() + static_cast<std::size_t>(n) * shape_.image_size(); }

  void fill(float v);
  bool all_finite() const;

  /// Channels [begin, end) of every image.
  Tensor slice_channels(int begin, int end) const;
  /// Images [begin, end) of the batch.
  Tensor slice_batch(int begin, int end) const;

  static Tensor concat_channels(const Tensor& a, const Tensor& b);
  static Tensor concat_batch(std::span<const Tensor> parts);

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<float> data_;
};

}  // namespace rdist
