#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rdist/core/config.hpp"
#include "rdist/core/rng.hpp"
#include "rdist/core/tensor.hpp"

namespace rdist::nn {

/// Trainable array with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> dims;
  std::vector<float> value;
  std::vector<float> grad;

  Param() = default;
  Param(std::string n, std::vector<int> d);
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

using ParamVisitor = std::function<void(Param&)>;
using ConstParamVisitor = std::function<void(const Param&)>;

/// 2-D convolution, square kernel, zero padding.
///
/// forward() is pure; forward_train() caches its input for backward(), which
/// accumulates parameter gradients and returns the input gradient.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Tensor forward_train(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  void visit(const ParamVisitor& f) { f(weight_); f(bias_); }
  void visit(const ConstParamVisitor& f) const { f(weight_); f(bias_); }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

 private:
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Param weight_, bias_;
  Tensor cached_;
};

/// Group, batch, or no normalization with per-channel affine parameters.
/// Group count is gcd(8, channels).
class Norm {
 public:
  Norm() = default;
  Norm(const std::string& name, NormKind kind, int channels);

  Tensor forward(const Tensor& x) const;
  Tensor forward_train(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  NormKind kind() const { return kind_; }
  int groups() const { return groups_; }
  std::size_t param_count() const { return kind_ == NormKind::kNone ? 0 : 2 * static_cast<std::size_t>(channels_); }

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
  /// Non-trainable state (batch-norm running statistics).
  std::vector<float>& running_mean() { return running_mean_; }
  std::vector<float>& running_var() { return running_var_; }
  const std::vector<float>& running_mean() const { return running_mean_; }
  const std::vector<float>& running_var() const { return running_var_; }

  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

 private:
  Tensor normalize(const Tensor& x, bool train);

  NormKind kind_ = NormKind::kNone;
  int channels_ = 0;
  int groups_ = 1;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;  // per (n, group) or per channel
};

Tensor silu(const Tensor& x);
/// Gradient of silu at input `x`.
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& grad_out);

/// Pre-activation residual block: x + conv(act(norm(...))) repeated `convs` times.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int channels, int convs, NormKind norm, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Tensor forward_train(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
  std::vector<Norm>& norms() { return norms_; }
  const std::vector<Norm>& norms() const { return norms_; }

 private:
  std::vector<Norm> norms_;
  std::vector<Conv2d> convs_;
  std::vector<Tensor> pre_act_;  // norm outputs, cached for silu backward
};

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace rdist::nn
