#pragma once

#include <map>
#include <string>
#include <vector>

#include "rdist/core/config.hpp"
#include "rdist/metrics/metrics.hpp"
#include "rdist/teacher/teacher.hpp"

namespace rdist {

/// Elementwise penalty of a residual d (even in d).
/// Smooth-L1: 0.5 d^2 / beta below beta, d - 0.5 beta above.
/// Classic: 0.5 d^2 below beta, beta (d - 0.5 beta) above.
double huber_penalty(double d, double beta, bool classic = false);
/// d(penalty)/dd, odd in d.
double huber_derivative(double d, double beta, bool classic = false);

/// Mean penalty over elements of |a - b|.
double huber_loss(const Tensor& a, const Tensor& b, double beta, bool classic = false);
/// Gradient of huber_loss with respect to `a`.
Tensor huber_loss_grad(const Tensor& a, const Tensor& b, double beta, bool classic = false);

double l1_loss(const Tensor& a, const Tensor& b);
Tensor l1_loss_grad(const Tensor& a, const Tensor& b);

/// Batch-statistics KL(T || S): teacher moments pool the per-element means and variances,
/// student moments are taken over z_s. Returns the value and d/dz_s.
std::pair<double, Tensor> batch_kl_term(const Tensor& z_s, const GaussianLatent& teacher);

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> terms;
};

struct LossEval {
  LossValue value;
  Tensor grad;  // d total / d z_s
};

/// Composite distillation objective. Terms are computed and reported even at zero weight;
/// gradients are only formed for weighted terms.
class DistillLoss {
 public:
  DistillLoss(LossSpec spec, TeacherPtr teacher, PerceptualPtr perceptual);

  const LossSpec& spec() const { return spec_; }
  const std::vector<std::string>& terms() const { return terms_; }

  /// `x` is the training batch in [-1,1]; `teacher_gauss` the teacher's encoding of it.
  LossEval evaluate(const Tensor& z_s, const Tensor& z_t, const ImageBatch& x, const GaussianLatent& teacher_gauss,
                    bool with_grad = true) const;

 private:
  LossSpec spec_;
  TeacherPtr teacher_;
  PerceptualPtr perceptual_;
  std::vector<std::string> terms_;
};

/// Checks backend requirements of composite kinds. Throws ContractError naming what is missing.
DistillLoss build_loss(const LossSpec& spec, TeacherPtr teacher, PerceptualPtr perceptual);

}  // namespace rdist
