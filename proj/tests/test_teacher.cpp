#include <doctest.h>

#include <cmath>

#include "rdist/data/dataset.hpp"
#include "rdist/data/resize.hpp"
#include "rdist/teacher/autoencoder.hpp"
#include "rdist/teacher/teacher.hpp"
#include "support.hpp"

using namespace rdist;

namespace {

ImageBatch sym_images(int n, int side, std::uint64_t seed) {
  return convert_range(ImageBatch(make_synthetic_images(n, side, seed), ValueRange::kUnit), ValueRange::kSymmetric);
}

double global_std(const Tensor& t) {
  double s = 0, s2 = 0;
  for (float v : t.values()) s += v, s2 += double(v) * v;
  const double n = static_cast<double>(t.numel());
  return std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
}

// <g, decode(z)> against the vjp at a handful of coordinates.
void check_decode_vjp(const TeacherBundle& teacher, const LatentBatch& z, double rel_tol, double h = 1e-2) {
  const ImageBatch out = teacher.decode(z);
  const Tensor g = testing::randn_tensor(out.data().shape(), 99);
  const Tensor vjp = teacher.decode_vjp(z, g);
  REQUIRE(vjp.shape() == z.data().shape());
  auto objective = [&](const Tensor& zz) {
    const ImageBatch y = teacher.decode(LatentBatch(zz, LatentSource::kDerived));
    double s = 0;
    for (std::size_t i = 0; i < g.numel(); ++i) s += double(g.values()[i]) * y.data().values()[i];
    return s;
  };
  for (std::size_t idx : {std::size_t{0}, z.data().numel() / 3, z.data().numel() - 1}) {
    Tensor plus = z.data(), minus = z.data();
    plus.values()[idx] += static_cast<float>(h);
    minus.values()[idx] -= static_cast<float>(h);
    const double fd = (objective(plus) - objective(minus)) / (2 * h);
    const double an = vjp.values()[idx];
    INFO("fd=" << fd << " an=" << an << " idx=" << idx);
    CHECK(std::abs(fd - an) <= rel_tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_SUITE("teacher") {

TEST_CASE("split_gaussian maps log-variance and direct std") {
  Tensor raw(Shape{1, 32, 1, 1});
  for (int c = 0; c < 16; ++c) raw.at(0, c, 0, 0) = static_cast<float>(c);
  raw.at(0, 16, 0, 0) = 2.0f * std::log(0.5f);
  raw.at(0, 17, 0, 0) = 100.0f;  // clamped to 20
  const GaussianLatent g = split_gaussian(raw);
  CHECK(g.mean.c() == 16);
  CHECK(g.mean.at(0, 5, 0, 0) == 5.0f);
  CHECK(g.std.at(0, 0, 0, 0) == doctest::Approx(0.5));
  CHECK(g.std.at(0, 1, 0, 0) == doctest::Approx(std::exp(10.0)));
  Tensor direct(Shape{1, 32, 1, 1}, 0.0f);
  const GaussianLatent d = split_gaussian(direct, StdParameterization::kDirectStd);
  CHECK(d.std.at(0, 0, 0, 0) == doctest::Approx(1e-12));
  CHECK_THROWS_AS(split_gaussian(Tensor(Shape{1, 16, 1, 1})), ContractError);
}

TEST_CASE("sampling is seed-reproducible and centred on the mean") {
  GaussianLatent g(Tensor(Shape{4, 16, 8, 8}, 0.5f), Tensor(Shape{4, 16, 8, 8}, 0.1f));
  Rng a = make_rng(1, "s"), b = make_rng(1, "s");
  const LatentBatch za = sample_latent(g, a), zb = sample_latent(g, b);
  CHECK(std::equal(za.data().values().begin(), za.data().values().end(), zb.data().values().begin()));
  double mean = 0;
  for (float v : za.data().values()) mean += v;
  CHECK(mean / za.data().numel() == doctest::Approx(0.5).epsilon(0.01));
  CHECK(mean_latent(g).data().at(3, 15, 7, 7) == 0.5f);
}

TEST_CASE("toy teacher satisfies the contract and is seed-deterministic") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kHighresSweet);
  check_teacher_contract(*t);
  check_teacher_contract(*t, Resolution(24, 40));
  CHECK(t->parameter_hash() == make_toy_teacher(0, ResolutionBias::kHighresSweet)->parameter_hash());
  CHECK(t->parameter_hash() != make_toy_teacher(1, ResolutionBias::kHighresSweet)->parameter_hash());
  const GaussianLatent g = t->encode(sym_images(2, 32, 1));
  CHECK(g.mean.shape() == Shape{2, 16, 4, 4});
  CHECK_THROWS_AS(t->encode(ImageBatch(Tensor(Shape{1, 3, 20, 16}), ValueRange::kSymmetric)), ContractError);
  CHECK_THROWS_AS(t->encode(ImageBatch(Tensor(Shape{1, 3, 16, 16}), ValueRange::kUnit)), ContractError);
}

TEST_CASE("toy teacher reconstructs smooth content well") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  const ImageBatch x = sym_images(2, 64, 2);
  const ImageBatch y = t->decode(mean_latent(t->encode(x)));
  double se = 0, var = 0;
  for (std::size_t i = 0; i < x.data().numel(); ++i) {
    se += std::pow(x.data().values()[i] - y.data().values()[i], 2);
    var += std::pow(x.data().values()[i], 2);
  }
  CHECK(se < 0.5 * var);
}

TEST_CASE("highres_sweet std grows with resolution") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kHighresSweet);
  const Tensor base = make_synthetic_images(4, 96, 3);
  double prev = 0;
  for (int side : {16, 32, 64, 96}) {
    const ImageBatch x = resize_images(convert_range(ImageBatch(base, ValueRange::kUnit), ValueRange::kSymmetric),
                                       Resolution::square(side));
    double mean_std = 0;
    const GaussianLatent g = t->encode(x);
    for (float v : g.std.values()) mean_std += v;
    mean_std /= static_cast<double>(g.std.numel());
    CHECK(mean_std > prev);
    prev = mean_std;
  }
  CHECK(global_std(t->encode(sym_images(1, 32, 4)).mean) > 0.0);
}

TEST_CASE("toy decode_vjp matches finite differences") {
  const TeacherPtr t = make_toy_teacher(3, ResolutionBias::kNone);
  const LatentBatch z(testing::randn_tensor(Shape{2, 16, 2, 3}, 5, 0.02f), LatentSource::kDerived);
  check_decode_vjp(*t, z, 1e-3);
}

TEST_CASE("adapter registry loads persisted teachers") {
  testing::TempDir tmp("registry");
  save_toy_teacher(tmp.path() / "toy.rdck", 4, ResolutionBias::kHighresSweet);
  const TeacherPtr loaded = load_external_teacher(tmp.path() / "toy.rdck", "toy-teacher");
  CHECK(loaded->parameter_hash() == make_toy_teacher(4, ResolutionBias::kHighresSweet)->parameter_hash());
  const auto ids = registered_adapters();
  CHECK(std::find(ids.begin(), ids.end(), "scratch-vae") != ids.end());
  try {
    load_external_teacher(tmp.path() / "toy.rdck", "unknown-vae");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("toy-teacher") != std::string::npos);
  }
  CHECK_THROWS(load_external_teacher(tmp.path() / "nope.rdck", "toy-teacher"));

  register_adapter("test-identity", [](const std::filesystem::path&) { return make_toy_teacher(9, ResolutionBias::kNone); });
  CHECK(load_external_teacher(tmp.path() / "toy.rdck", "test-identity")->parameter_hash() ==
        make_toy_teacher(9, ResolutionBias::kNone)->parameter_hash());
}

TEST_CASE("scratch autoencoder contract, persistence, and vjp") {
  testing::TempDir tmp("scratch");
  AutoencoderShape shape;
  shape.hidden = 4;
  shape.stages = 3;
  shape.blocks_per_stage = 1;
  auto model = std::make_shared<AutoencoderModel>(shape, 3);
  check_teacher_contract(*model, Resolution::square(16));
  model->save(tmp.path() / "vae.rdae");
  const auto back = AutoencoderModel::load(tmp.path() / "vae.rdae");
  CHECK(back->parameter_hash() == model->parameter_hash());
  CHECK(back->parameter_count() == model->parameter_count());
  const TeacherPtr via_registry = load_external_teacher(tmp.path() / "vae.rdae", "scratch-vae");
  CHECK(via_registry->parameter_hash() == model->parameter_hash());

  const LatentBatch z(testing::randn_tensor(Shape{1, 16, 2, 2}, 8, 0.3f), LatentSource::kDerived);
  check_decode_vjp(*model, z, 2e-2, 2e-3);
}

}
