#include "rdist/distill/losses.hpp"

#include <cmath>

#include <fmt/format.h>

namespace rdist {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ContractError(fmt::format("{}: shape mismatch {} vs {}", what, a.shape().str(), b.shape().str()));
}

void require_beta(double beta) {
  if (!(beta > 0.0)) throw ContractError(fmt::format("huber beta must be > 0, got {}", beta));
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

void axpy(Tensor& dst, double w, const Tensor& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst.data()[i] += static_cast<float>(w * src.data()[i]);
}

}  // namespace

double huber_penalty(double d, double beta, bool classic) {
  d = std::abs(d);
  if (classic) return d < beta ? 0.5 * d * d : beta * (d - 0.5 * beta);
  return d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
}

double huber_derivative(double d, double beta, bool classic) {
  const double sign = d < 0.0 ? -1.0 : 1.0;
  d = std::abs(d);
  if (classic) return d < beta ? sign * d : sign * beta;
  return d < beta ? sign * d / beta : sign;
}

double huber_loss(const Tensor& a, const Tensor& b, double beta, bool classic) {
  require_same_shape(a, b, "huber_loss");
  require_beta(beta);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    s += huber_penalty(std::abs(static_cast<double>(a.data()[i]) - b.data()[i]), beta, classic);
  }
  return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

Tensor huber_loss_grad(const Tensor& a, const Tensor& b, double beta, bool classic) {
  require_same_shape(a, b, "huber_loss");
  require_beta(beta);
  Tensor g(a.shape());
  const double inv = a.numel() ? 1.0 / static_cast<double>(a.numel()) : 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double r = static_cast<double>(a.data()[i]) - b.data()[i];
    const double sign = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
    g.data()[i] = static_cast<float>(sign * huber_derivative(std::abs(r), beta, classic) * inv);
  }
  return g;
}

double l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

Tensor l1_loss_grad(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  Tensor g(a.shape());
  const float inv = a.numel() ? 1.0f / static_cast<float>(a.numel()) : 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const float r = a.data()[i] - b.data()[i];
    g.data()[i] = r > 0 ? inv : (r < 0 ? -inv : 0.0f);
  }
  return g;
}

std::pair<double, Tensor> batch_kl_term(const Tensor& z_s, const GaussianLatent& teacher) {
  require_same_shape(z_s, teacher.mean, "kl term");
  const double n = static_cast<double>(z_s.numel());
  double mu_t = 0.0, mu_s = 0.0;
  for (std::size_t i = 0; i < z_s.numel(); ++i) {
    mu_t += teacher.mean.data()[i];
    mu_s += z_s.data()[i];
  }
  mu_t /= n;
  mu_s /= n;
  double var_t = 0.0, var_s = 0.0;
  for (std::size_t i = 0; i < z_s.numel(); ++i) {
    const double dm = teacher.mean.data()[i] - mu_t;
    const double sd = teacher.std.data()[i];
    var_t += dm * dm + sd * sd;
    const double ds = z_s.data()[i] - mu_s;
    var_s += ds * ds;
  }
  var_t /= n;
  var_s = var_s / n + 1e-12;
  const double gap = mu_t - mu_s;
  const double kl = 0.5 * std::log(var_s / var_t) + (var_t + gap * gap) / (2.0 * var_s) - 0.5;
  const double d_mu = -gap / var_s;
  const double d_var = 0.5 / var_s - (var_t + gap * gap) / (2.0 * var_s * var_s);
  Tensor g(z_s.shape());
  for (std::size_t i = 0; i < z_s.numel(); ++i) {
    g.data()[i] = static_cast<float>((d_mu + d_var * 2.0 * (z_s.data()[i] - mu_s)) / n);
  }
  return {kl, std::move(g)};
}

DistillLoss::DistillLoss(LossSpec spec, TeacherPtr teacher, PerceptualPtr perceptual)
    : spec_(std::move(spec)), teacher_(std::move(teacher)), perceptual_(std::move(perceptual)) {
  spec_.validate();
  switch (spec_.kind) {
    case LossKind::kL1: terms_ = {"l1"}; break;
    case LossKind::kHuber: terms_ = {"huber"}; break;
    case LossKind::kHuberLpips: terms_ = {"huber", "lpips"}; break;
    case LossKind::kHuberLpipsRecon: terms_ = {"huber", "lpips", "recon"}; break;
    case LossKind::kHuberLpipsKl: terms_ = {"huber", "lpips", "kl"}; break;
  }
}

LossEval DistillLoss::evaluate(const Tensor& z_s, const Tensor& z_t, const ImageBatch& x,
                               const GaussianLatent& teacher_gauss, bool with_grad) const {
  LossEval out;
  if (with_grad) out.grad = Tensor(z_s.shape());
  auto add = [&](const std::string& term, double v) {
    out.value.terms[term] = v;
    out.value.total += spec_.weight(term) * v;
  };
  auto wants_grad = [&](const std::string& term) { return with_grad && spec_.weight(term) > 0.0; };

  for (const auto& term : terms_) {
    if (term == "l1") {
      add(term, l1_loss(z_s, z_t));
      if (wants_grad(term)) axpy(out.grad, spec_.weight(term), l1_loss_grad(z_s, z_t));
    } else if (term == "huber") {
      add(term, huber_loss(z_s, z_t, spec_.beta, spec_.classic_huber));
      if (wants_grad(term)) axpy(out.grad, spec_.weight(term), huber_loss_grad(z_s, z_t, spec_.beta, spec_.classic_huber));
    } else if (term == "lpips") {
      const LatentBatch zs(z_s, LatentSource::kStudent);
      const ImageBatch rec = convert_range(teacher_->decode(zs), ValueRange::kUnit);
      const ImageBatch target = convert_range(teacher_->decode(LatentBatch(z_t, LatentSource::kDerived)), ValueRange::kUnit);
      const auto d = perceptual_->distance(rec, target);
      add(term, mean_std(d).first);
      if (wants_grad(term)) {
        Tensor g = perceptual_->distance_grad(rec, target);
        for (float& v : g.values()) v *= 0.5f;  // unit range -> symmetric range
        axpy(out.grad, spec_.weight(term), teacher_->decode_vjp(zs, g));
      }
    } else if (term == "recon") {
      const LatentBatch zs(z_s, LatentSource::kStudent);
      const ImageBatch rec = teacher_->decode(zs);
      add(term, mean_sq_diff(rec.data(), x.data()));
      if (wants_grad(term)) {
        Tensor g(rec.data().shape());
        const double inv = 2.0 / static_cast<double>(g.numel());
        for (std::size_t i = 0; i < g.numel(); ++i) {
          g.data()[i] = static_cast<float>(inv * (static_cast<double>(rec.data().data()[i]) - x.data().data()[i]));
        }
        axpy(out.grad, spec_.weight(term), teacher_->decode_vjp(zs, g));
      }
    } else if (term == "kl") {
      auto [v, g] = batch_kl_term(z_s, teacher_gauss);
      add(term, v);
      if (wants_grad(term)) axpy(out.grad, spec_.weight(term), g);
    }
  }
  return out;
}

DistillLoss build_loss(const LossSpec& spec, TeacherPtr teacher, PerceptualPtr perceptual) {
  const bool needs_perceptual = spec.kind == LossKind::kHuberLpips || spec.kind == LossKind::kHuberLpipsRecon ||
                                spec.kind == LossKind::kHuberLpipsKl;
  const bool needs_decoder = needs_perceptual;
  if (needs_perceptual && !perceptual) {
    throw ContractError(fmt::format("loss '{}' requires a perceptual backend", to_string(spec.kind)));
  }
  if (needs_perceptual && spec.weight("lpips") > 0.0 && perceptual->distance_grad(
          ImageBatch(Tensor(Shape{1, 3, 8, 8}), ValueRange::kUnit), ImageBatch(Tensor(Shape{1, 3, 8, 8}), ValueRange::kUnit))
                                                           .empty()) {
    throw ContractError(fmt::format("perceptual backend '{}' is not differentiable", perceptual->id()));
  }
  if (needs_decoder && (!teacher || !teacher->supports_decode_vjp())) {
    throw ContractError(fmt::format("loss '{}' requires a teacher decoder with gradients", to_string(spec.kind)));
  }
  return DistillLoss(spec, std::move(teacher), std::move(perceptual));
}

}  // namespace rdist
