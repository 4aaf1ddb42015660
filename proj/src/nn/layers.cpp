#include "rdist/nn/layers.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Core>
#include <fmt/format.h>

namespace rdist::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// cols is (C*k*k, Ho*Wo), row-major.
void im2col(const float* img, int c, int h, int w, int k, int stride, int pad, int ho, int wo, float* cols) {
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = img + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, float* img) {
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    float* plane = img + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * w;
          const float* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

Param::Param(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
  std::size_t count = 1;
  for (int v : dims) count *= static_cast<std::size_t>(v);
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", {out_channels}) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels) * kernel * kernel);
  for (float& v : weight_.value) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  for (float& v : bias_.value) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c() != in_) throw std::invalid_argument(fmt::format("{}: expected {} input channels, got {}", weight_.name, in_, x.c()));
  const int ho = out_size(x.h());
  const int wo = out_size(x.w());
  if (ho <= 0 || wo <= 0) throw std::invalid_argument(weight_.name + ": input too small");
  Tensor y(Shape{x.n(), out_, ho, wo});
  const int kdim = in_ * k_ * k_;
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  ConstMapMat W(weight_.value.data(), out_, kdim);
  Eigen::Map<const Eigen::VectorXf> b(bias_.value.data(), out_);
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw_out);
  for (int n = 0; n < x.n(); ++n) {
    const float* src = x.image(n);
    if (!pointwise) {
      im2col(src, in_, x.h(), x.w(), k_, stride_, pad_, ho, wo, cols.data());
      src = cols.data();
    }
    ConstMapMat X(src, kdim, static_cast<Eigen::Index>(hw_out));
    MapMat Y(y.image(n), out_, static_cast<Eigen::Index>(hw_out));
    Y.noalias() = W * X;
    Y.colwise() += b;
  }
  return y;
}

Tensor Conv2d::forward_train(const Tensor& x) {
  cached_ = x;
  return forward(x);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = cached_;
  const int ho = grad_out.h();
  const int wo = grad_out.w();
  const int kdim = in_ * k_ * k_;
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  ConstMapMat W(weight_.value.data(), out_, kdim);
  MapMat dW(weight_.grad.data(), out_, kdim);
  Tensor dx(x.shape());
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw_out);
  std::vector<float> dcols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw_out);
  for (int n = 0; n < x.n(); ++n) {
    ConstMapMat G(grad_out.image(n), out_, static_cast<Eigen::Index>(hw_out));
    const float* src = x.image(n);
    if (!pointwise) {
      im2col(src, in_, x.h(), x.w(), k_, stride_, pad_, ho, wo, cols.data());
      src = cols.data();
    }
    ConstMapMat X(src, kdim, static_cast<Eigen::Index>(hw_out));
    dW.noalias() += G * X.transpose();
    // Plain loop: Eigen's reduction peels by pointer alignment, which makes the sum address dependent.
    for (int o = 0; o < out_; ++o) {
      const float* g = grad_out.image(n) + static_cast<std::size_t>(o) * hw_out;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw_out; ++i) acc += g[i];
      bias_.grad[o] += static_cast<float>(acc);
    }
    if (pointwise) {
      MapMat dX(dx.image(n), kdim, static_cast<Eigen::Index>(hw_out));
      dX.noalias() = W.transpose() * G;
    } else {
      MapMat dC(dcols.data(), kdim, static_cast<Eigen::Index>(hw_out));
      dC.noalias() = W.transpose() * G;
      col2im(dcols.data(), in_, x.h(), x.w(), k_, stride_, pad_, ho, wo, dx.image(n));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Norm

Norm::Norm(const std::string& name, NormKind kind, int channels) : kind_(kind), channels_(channels) {
  if (kind_ == NormKind::kNone) return;
  gamma_ = Param(name + ".weight", {channels});
  beta_ = Param(name + ".bias", {channels});
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
  if (kind_ == NormKind::kGroup) groups_ = std::gcd(8, channels);
  if (kind_ == NormKind::kBatch) {
    running_mean_.assign(channels, 0.0f);
    running_var_.assign(channels, 1.0f);
  }
}

void Norm::visit(const ParamVisitor& f) {
  if (kind_ == NormKind::kNone) return;
  f(gamma_);
  f(beta_);
}

void Norm::visit(const ConstParamVisitor& f) const {
  if (kind_ == NormKind::kNone) return;
  f(gamma_);
  f(beta_);
}

Tensor Norm::forward(const Tensor& x) const {
  if (kind_ == NormKind::kNone) return x;
  return const_cast<Norm*>(this)->normalize(x, false);
}

Tensor Norm::forward_train(const Tensor& x) {
  if (kind_ == NormKind::kNone) return x;
  return normalize(x, true);
}

// Inference calls never touch member state: batch norm reads running stats and
// group norm computes everything locally.
Tensor Norm::normalize(const Tensor& x, bool train) {
  if (x.c() != channels_) throw std::invalid_argument(fmt::format("{}: expected {} channels, got {}", gamma_.name, channels_, x.c()));
  const int N = x.n();
  const int C = channels_;
  const std::size_t hw = x.shape().plane_size();
  Tensor xhat(x.shape());
  std::vector<float> inv;

  if (kind_ == NormKind::kGroup) {
    const int cg = C / groups_;
    inv.resize(static_cast<std::size_t>(N) * groups_);
    for (int n = 0; n < N; ++n) {
      for (int g = 0; g < groups_; ++g) {
        const float* src = x.plane(n, g * cg);
        const std::size_t m = static_cast<std::size_t>(cg) * hw;
        double sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) sum += src[i];
        const double mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) sq += (src[i] - mean) * (src[i] - mean);
        const float istd = static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(m) + kEps));
        inv[static_cast<std::size_t>(n) * groups_ + g] = istd;
        float* dst = xhat.plane(n, g * cg);
        for (std::size_t i = 0; i < m; ++i) dst[i] = static_cast<float>(src[i] - mean) * istd;
      }
    }
  } else {
    inv.resize(C);
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      double var = 0.0;
      const double m = static_cast<double>(N) * hw;
      if (train) {
        double sum = 0.0;
        for (int n = 0; n < N; ++n) {
          const float* src = x.plane(n, c);
          for (std::size_t i = 0; i < hw; ++i) sum += src[i];
        }
        mean = sum / m;
        double sq = 0.0;
        for (int n = 0; n < N; ++n) {
          const float* src = x.plane(n, c);
          for (std::size_t i = 0; i < hw; ++i) sq += (src[i] - mean) * (src[i] - mean);
        }
        var = sq / m;
        const double unbiased = m > 1 ? sq / (m - 1) : var;
        running_mean_[c] = static_cast<float>((1.0 - kMomentum) * running_mean_[c] + kMomentum * mean);
        running_var_[c] = static_cast<float>((1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased);
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const float istd = static_cast<float>(1.0 / std::sqrt(var + kEps));
      inv[c] = istd;
      for (int n = 0; n < N; ++n) {
        const float* src = x.plane(n, c);
        float* dst = xhat.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<float>(src[i] - mean) * istd;
      }
    }
  }

  Tensor y(x.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float gm = gamma_.value[c];
      const float bt = beta_.value[c];
      const float* src = xhat.plane(n, c);
      float* dst = y.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = gm * src[i] + bt;
    }
  }
  if (train) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv);
  }
  return y;
}

Tensor Norm::backward(const Tensor& grad_out) {
  if (kind_ == NormKind::kNone) return grad_out;
  const int N = grad_out.n();
  const int C = channels_;
  const std::size_t hw = grad_out.shape().plane_size();
  Tensor dxhat(grad_out.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* g = grad_out.plane(n, c);
      const float* xh = xhat_.plane(n, c);
      float* d = dxhat.plane(n, c);
      double dg = 0.0, dbt = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        dg += static_cast<double>(g[i]) * xh[i];
        dbt += g[i];
        d[i] = g[i] * gamma_.value[c];
      }
      gamma_.grad[c] += static_cast<float>(dg);
      beta_.grad[c] += static_cast<float>(dbt);
    }
  }
  Tensor dx(grad_out.shape());
  // dx = inv/M * (M*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)) over each normalization set
  auto reduce_set = [&](auto&& for_each_plane, float istd, double m) {
    double s1 = 0.0, s2 = 0.0;
    for_each_plane([&](const float* d, const float* xh, float*) {
      for (std::size_t i = 0; i < hw; ++i) {
        s1 += d[i];
        s2 += static_cast<double>(d[i]) * xh[i];
      }
    });
    const double a = s1 / m, b = s2 / m;
    for_each_plane([&](const float* d, const float* xh, float* out) {
      for (std::size_t i = 0; i < hw; ++i) out[i] = static_cast<float>(istd * (d[i] - a - xh[i] * b));
    });
  };
  if (kind_ == NormKind::kGroup) {
    const int cg = C / groups_;
    for (int n = 0; n < N; ++n) {
      for (int g = 0; g < groups_; ++g) {
        auto planes = [&](auto&& f) {
          for (int c = g * cg; c < (g + 1) * cg; ++c) f(dxhat.plane(n, c), xhat_.plane(n, c), dx.plane(n, c));
        };
        reduce_set(planes, inv_std_[static_cast<std::size_t>(n) * groups_ + g], static_cast<double>(cg) * hw);
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      auto planes = [&](auto&& f) {
        for (int n = 0; n < N; ++n) f(dxhat.plane(n, c), xhat_.plane(n, c), dx.plane(n, c));
      };
      reduce_set(planes, inv_std_[c], static_cast<double>(N) * hw);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  const float* s = x.data();
  float* d = y.data();
  for (std::size_t i = 0; i < x.numel(); ++i) d[i] = s[i] * sigmoid(s[i]);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor dx(x.shape());
  const float* s = x.data();
  const float* g = grad_out.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float sg = sigmoid(s[i]);
    d[i] = g[i] * sg * (1.0f + s[i] * (1.0f - sg));
  }
  return dx;
}

Tensor upsample_nearest2x(const Tensor& x) {
  Tensor y(Shape{x.n(), x.c(), x.h() * 2, x.w() * 2});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* s = x.plane(n, c);
      float* d = y.plane(n, c);
      const int w2 = x.w() * 2;
      for (int yy = 0; yy < y.h(); ++yy) {
        const float* row = s + static_cast<std::size_t>(yy / 2) * x.w();
        for (int xx = 0; xx < w2; ++xx) d[static_cast<std::size_t>(yy) * w2 + xx] = row[xx / 2];
      }
    }
  }
  return y;
}

Tensor upsample_nearest2x_backward(const Tensor& grad_out) {
  Tensor dx(Shape{grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2});
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const float* g = grad_out.plane(n, c);
      float* d = dx.plane(n, c);
      for (int yy = 0; yy < grad_out.h(); ++yy) {
        for (int xx = 0; xx < grad_out.w(); ++xx) {
          d[static_cast<std::size_t>(yy / 2) * dx.w() + xx / 2] += g[static_cast<std::size_t>(yy) * grad_out.w() + xx];
        }
      }
    }
  }
  return dx;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) throw std::invalid_argument("add_inplace shape mismatch " + dst.shape().str() + " vs " + src.shape().str());
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

// ---------------------------------------------------------------------------
// ResBlock

ResBlock::ResBlock(const std::string& name, int channels, int convs, NormKind norm, Rng& rng) {
  for (int i = 0; i < convs; ++i) {
    norms_.emplace_back(fmt::format("{}.norm{}", name, i + 1), norm, channels);
    convs_.emplace_back(fmt::format("{}.conv{}", name, i + 1), channels, channels, 3, 1, 1, rng);
  }
}

Tensor ResBlock::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = convs_[i].forward(silu(norms_[i].forward(h)));
  add_inplace(h, x);
  return h;
}

Tensor ResBlock::forward_train(const Tensor& x) {
  pre_act_.clear();
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    pre_act_.push_back(norms_[i].forward_train(h));
    h = convs_[i].forward_train(silu(pre_act_.back()));
  }
  add_inplace(h, x);
  return h;
}

Tensor ResBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = convs_.size(); i-- > 0;) {
    g = convs_[i].backward(g);
    g = silu_backward(pre_act_[i], g);
    g = norms_[i].backward(g);
  }
  add_inplace(g, grad_out);
  return g;
}

void ResBlock::visit(const ParamVisitor& f) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    norms_[i].visit(f);
    convs_[i].visit(f);
  }
}

void ResBlock::visit(const ConstParamVisitor& f) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    norms_[i].visit(f);
    convs_[i].visit(f);
  }
}

}  // namespace rdist::nn
