#pragma once

#include <map>
#include <string>
#include <vector>

#include "rdist/core/archive.hpp"
#include "rdist/nn/layers.hpp"

namespace rdist::nn {

/// Adam with bias correction, no weight decay, constant learning rate.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params);
  long long steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

  /// Moment buffers as archive entries "adam.m.<name>" / "adam.v.<name>".
  void save(Archive& ar) const;
  void load(const Archive& ar);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

}  // namespace rdist::nn
