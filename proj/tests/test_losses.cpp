#include <doctest.h>

#include <cmath>

#include "rdist/distill/losses.hpp"
#include "rdist/data/dataset.hpp"
#include "support.hpp"

using namespace rdist;

namespace {

template <class F>
double central_diff(F f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

// Checks d f(z)/dz[idx] from `grad` against central differences on a float tensor.
template <class F>
void check_tensor_grad(F f, const Tensor& z, const Tensor& grad, double h, double tol) {
  REQUIRE(grad.shape() == z.shape());
  for (std::size_t idx : {std::size_t{0}, z.numel() / 2, z.numel() - 1}) {
    Tensor p = z, m = z;
    p.values()[idx] += static_cast<float>(h);
    m.values()[idx] -= static_cast<float>(h);
    const double fd = (f(p) - f(m)) / (2 * h);
    CHECK(std::abs(fd - grad.values()[idx]) <= tol * std::max(std::abs(fd), 1e-3));
  }
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("smooth-L1 values at beta 0.15") {
  CHECK(huber_penalty(0.1, 0.15) == doctest::Approx(0.0333333333).epsilon(1e-9));
  CHECK(huber_penalty(1.0, 0.15) == doctest::Approx(0.925).epsilon(1e-12));
  CHECK(huber_penalty(0.0, 0.15) == 0.0);
  CHECK(huber_penalty(-1.0, 0.15) == doctest::Approx(0.925));
  // Classic form: 0.5 d^2 inside, beta (d - beta/2) outside.
  CHECK(huber_penalty(0.1, 0.15, true) == doctest::Approx(0.005));
  CHECK(huber_penalty(1.0, 0.15, true) == doctest::Approx(0.15 * 0.925));
}

TEST_CASE("penalty is C1 at the knee") {
  for (double beta : {0.05, 0.15, 1.0}) {
    for (bool classic : {false, true}) {
      const double eps = 1e-9;
      CHECK(std::abs(huber_penalty(beta - eps, beta, classic) - huber_penalty(beta + eps, beta, classic)) < 1e-6);
      CHECK(std::abs(huber_derivative(beta - eps, beta, classic) - huber_derivative(beta + eps, beta, classic)) < 1e-6);
    }
  }
}

TEST_CASE("analytic derivative matches central differences") {
  for (bool classic : {false, true}) {
    for (double d : {-2.0, -0.4, -0.07, 0.01, 0.1, 0.149, 0.151, 0.5, 3.0}) {
      const double fd = central_diff([&](double v) { return huber_penalty(v, 0.15, classic); }, d);
      const double an = huber_derivative(d, 0.15, classic);
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("mean losses and their gradients") {
  const Tensor a = testing::randn_tensor(Shape{2, 16, 2, 2}, 1, 0.3f);
  const Tensor b = testing::randn_tensor(Shape{2, 16, 2, 2}, 2, 0.3f);
  double oracle = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) oracle += huber_penalty(a.values()[i] - b.values()[i], 0.15);
  CHECK(huber_loss(a, b, 0.15) == doctest::Approx(oracle / a.numel()));
  check_tensor_grad([&](const Tensor& t) { return huber_loss(t, b, 0.15); }, a, huber_loss_grad(a, b, 0.15), 1e-3, 1e-2);
  check_tensor_grad([&](const Tensor& t) { return l1_loss(t, b); }, a, l1_loss_grad(a, b), 1e-3, 1e-2);
  CHECK(huber_loss(a, a, 0.15) == 0.0);
  CHECK_THROWS_AS(huber_loss(a, Tensor(Shape{1, 16, 2, 2}), 0.15), ContractError);
  CHECK_THROWS_AS(huber_loss(a, b, 0.0), ContractError);
}

TEST_CASE("batch KL term: closed form and gradient") {
  const Tensor zs = testing::randn_tensor(Shape{2, 16, 3, 3}, 3, 0.5f);
  GaussianLatent g(testing::randn_tensor(Shape{2, 16, 3, 3}, 4, 0.4f), Tensor(Shape{2, 16, 3, 3}, 0.2f));
  const auto [kl, grad] = batch_kl_term(zs, g);
  CHECK(kl >= 0.0);
  check_tensor_grad([&](const Tensor& t) { return batch_kl_term(t, g).first; }, zs, grad, 1e-3, 2e-2);

  // Matching moments give zero divergence.
  GaussianLatent same(zs, Tensor(zs.shape(), 1e-6f));
  CHECK(batch_kl_term(zs, same).first == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("composite objectives report their terms") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  const PerceptualPtr p = find_perceptual_backend("gradient-features");
  const ImageBatch x = convert_range(ImageBatch(make_synthetic_images(2, 16, 1), ValueRange::kUnit), ValueRange::kSymmetric);
  const GaussianLatent g = t->encode(x);
  const Tensor zs = testing::randn_tensor(g.mean.shape(), 5, 0.2f);
  const std::map<LossKind, std::vector<std::string>> expected{
      {LossKind::kL1, {"l1"}},
      {LossKind::kHuber, {"huber"}},
      {LossKind::kHuberLpips, {"huber", "lpips"}},
      {LossKind::kHuberLpipsRecon, {"huber", "lpips", "recon"}},
      {LossKind::kHuberLpipsKl, {"huber", "lpips", "kl"}}};
  for (const auto& [kind, terms] : expected) {
    LossSpec spec;
    spec.kind = kind;
    const DistillLoss loss = build_loss(spec, t, p);
    CHECK(loss.terms() == terms);
    const LossEval ev = loss.evaluate(zs, g.mean, x, g);
    double sum = 0;
    for (const auto& name : terms) {
      REQUIRE(ev.value.terms.count(name));
      sum += ev.value.terms.at(name);
    }
    CHECK(ev.value.total == doctest::Approx(sum));
    check_tensor_grad([&](const Tensor& z) { return loss.evaluate(z, g.mean, x, g, false).value.total; }, zs, ev.grad,
                      1e-2, 5e-2);
  }
}

TEST_CASE("zero-weight terms are reported but do not contribute") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  const ImageBatch x = convert_range(ImageBatch(make_synthetic_images(1, 16, 2), ValueRange::kUnit), ValueRange::kSymmetric);
  const GaussianLatent g = t->encode(x);
  const Tensor zs = testing::randn_tensor(g.mean.shape(), 6, 0.2f);
  LossSpec spec;
  spec.kind = LossKind::kHuberLpipsRecon;
  spec.term_weights = {{"lpips", 0.0}, {"recon", 0.0}};
  const LossEval ev = build_loss(spec, t, find_perceptual_backend("gradient-features")).evaluate(zs, g.mean, x, g);
  CHECK(ev.value.terms.at("lpips") > 0.0);
  CHECK(ev.value.total == doctest::Approx(ev.value.terms.at("huber")));
  const Tensor hg = huber_loss_grad(zs, g.mean, spec.beta);
  for (std::size_t i = 0; i < hg.numel(); ++i) CHECK(ev.grad.values()[i] == doctest::Approx(hg.values()[i]));
}

TEST_CASE("composite kinds require their backends") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  LossSpec spec;
  spec.kind = LossKind::kHuberLpips;
  CHECK_THROWS_AS(build_loss(spec, t, nullptr), ContractError);
  spec.kind = LossKind::kHuber;
  CHECK_NOTHROW(build_loss(spec, t, nullptr));
  spec.beta = -1;
  CHECK_THROWS(build_loss(spec, t, nullptr));
}

}
