#include "rdist/data/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

namespace rdist {
namespace {

double triangle(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

// Keys cubic with a = -0.5.
double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

/// Sparse 1-D resampling matrix: for each output index, a run of input taps.
struct Taps {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<double> weights;  // count.size() * max_taps
  int max_taps = 0;
};

Taps make_taps(int in_size, int out_size, ResizeMethod method, bool antialias) {
  Taps t;
  t.first.resize(out_size);
  t.count.resize(out_size);
  const double scale = static_cast<double>(out_size) / in_size;
  if (method == ResizeMethod::kNearest) {
    t.max_taps = 1;
    t.weights.assign(out_size, 1.0);
    for (int i = 0; i < out_size; ++i) {
      t.first[i] = std::min(in_size - 1, static_cast<int>(std::floor((i + 0.5) / scale)));
      t.count[i] = 1;
    }
    return t;
  }
  const double support = method == ResizeMethod::kBilinear ? 1.0 : 2.0;
  const double filter_scale = (antialias && scale < 1.0) ? 1.0 / scale : 1.0;
  const double radius = support * filter_scale;
  t.max_taps = static_cast<int>(std::ceil(radius)) * 2 + 1;
  t.weights.assign(static_cast<std::size_t>(out_size) * t.max_taps, 0.0);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) / scale;
    int lo = static_cast<int>(std::floor(center - radius + 0.5));
    int hi = static_cast<int>(std::floor(center + radius + 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, in_size);
    double* w = t.weights.data() + static_cast<std::size_t>(i) * t.max_taps;
    double total = 0.0;
    int n = 0;
    for (int j = lo; j < hi && n < t.max_taps; ++j, ++n) {
      const double x = (j + 0.5 - center) / filter_scale;
      w[n] = method == ResizeMethod::kBilinear ? triangle(x) : cubic(x);
      total += w[n];
    }
    if (total == 0.0) {
      // Degenerate window: fall back to the nearest sample.
      lo = std::clamp(static_cast<int>(std::floor(center)), 0, in_size - 1);
      n = 1;
      w[0] = 1.0;
      total = 1.0;
    }
    for (int k = 0; k < n; ++k) w[k] /= total;
    t.first[i] = lo;
    t.count[i] = n;
  }
  return t;
}

}  // namespace

std::string_view to_string(ResizeMethod m) {
  switch (m) {
    case ResizeMethod::kBilinear: return "bilinear";
    case ResizeMethod::kBicubic: return "bicubic";
    case ResizeMethod::kNearest: return "nearest";
  }
  return "bilinear";
}

ResizeMethod resize_method_from_string(std::string_view s) {
  if (s == "bilinear") return ResizeMethod::kBilinear;
  if (s == "bicubic") return ResizeMethod::kBicubic;
  if (s == "nearest") return ResizeMethod::kNearest;
  throw ContractError(fmt::format("unknown resize method '{}'", s));
}

Tensor resize_tensor(const Tensor& x, int out_h, int out_w, ResizeMethod method, bool antialias) {
  if (out_h <= 0 || out_w <= 0) throw ContractError(fmt::format("resize target {}x{} must be positive", out_h, out_w));
  if (out_h == x.h() && out_w == x.w()) return x;
  const int in_h = x.h();
  const int in_w = x.w();
  const Taps th = make_taps(in_h, out_h, method, antialias);
  const Taps tw = make_taps(in_w, out_w, method, antialias);
  Tensor out(Shape{x.n(), x.c(), out_h, out_w});
  std::vector<double> rows(static_cast<std::size_t>(in_h) * out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      // horizontal pass
      for (int y = 0; y < in_h; ++y) {
        const float* row = src + static_cast<std::size_t>(y) * in_w;
        for (int i = 0; i < out_w; ++i) {
          const double* w = tw.weights.data() + static_cast<std::size_t>(i) * tw.max_taps;
          double acc = 0.0;
          for (int k = 0; k < tw.count[i]; ++k) acc += w[k] * row[tw.first[i] + k];
          rows[static_cast<std::size_t>(y) * out_w + i] = acc;
        }
      }
      // vertical pass
      float* dst = out.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        const double* w = th.weights.data() + static_cast<std::size_t>(i) * th.max_taps;
        for (int xx = 0; xx < out_w; ++xx) {
          double acc = 0.0;
          for (int k = 0; k < th.count[i]; ++k) acc += w[k] * rows[static_cast<std::size_t>(th.first[i] + k) * out_w + xx];
          dst[static_cast<std::size_t>(i) * out_w + xx] = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

ImageBatch resize_images(const ImageBatch& batch, const Resolution& target, ResizeMethod method, bool antialias) {
  if (target == batch.resolution()) return batch;
  Tensor out = resize_tensor(batch.data(), target.height, target.width, method, antialias);
  const float lo = batch.range() == ValueRange::kUnit ? 0.0f : -1.0f;
  for (float& v : out.values()) v = std::clamp(v, lo, 1.0f);
  return ImageBatch(std::move(out), batch.range());
}

ImageBatch resize_images(const ImageBatch& batch, const Resolution& target, ResizeMethod method) {
  const Resolution src = batch.resolution();
  const bool shrinking = target.height < src.height || target.width < src.width;
  return resize_images(batch, target, method, shrinking);
}

Tensor center_crop_square(const Tensor& x) {
  const int side = std::min(x.h(), x.w());
  if (side == x.h() && side == x.w()) return x;
  const int y0 = (x.h() - side) / 2;
  const int x0 = (x.w() - side) / 2;
  Tensor out(Shape{x.n(), x.c(), side, side});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < side; ++y) {
        std::copy_n(x.plane(n, c) + static_cast<std::size_t>(y + y0) * x.w() + x0, side,
                    out.plane(n, c) + static_cast<std::size_t>(y) * side);
      }
    }
  }
  return out;
}

}  // namespace rdist
