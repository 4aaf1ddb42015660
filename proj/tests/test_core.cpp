#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "rdist/core/archive.hpp"
#include "rdist/core/config.hpp"
#include "rdist/core/hash.hpp"
#include "rdist/core/rng.hpp"
#include "rdist/core/types.hpp"
#include "support.hpp"

using namespace rdist;

TEST_SUITE("core") {

TEST_CASE("resolution and scale factor contracts") {
  CHECK_THROWS_AS(Resolution(4, 16), ContractError);
  CHECK(Resolution::square(256).latent_grid() == Grid{32, 32});
  CHECK_THROWS_AS(Resolution(20, 16).require_divisible(8), ContractError);
  CHECK_THROWS_AS(ScaleFactor(0.0), ContractError);
  CHECK_THROWS_AS(ScaleFactor(-1.0), ContractError);
  CHECK(ScaleFactor(1.5).apply(Resolution::square(256)) == Resolution::square(384));
  // 0.5 * 20 = 10 rounds to the nearest multiple of 8.
  CHECK(ScaleFactor(0.5).apply(Resolution(16, 20)).width == 8);
  CHECK(Resolution::square(64) < Resolution::square(96));
}

TEST_CASE("latent batch rejects wrong channel counts and non-finite values") {
  CHECK_THROWS_AS(LatentBatch(Tensor(Shape{1, 8, 2, 2}), LatentSource::kStudent), ContractError);
  Tensor bad(Shape{1, kLatentChannels, 2, 2});
  bad.at(0, 3, 1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(LatentBatch(bad, LatentSource::kStudent), ContractError);
}

TEST_CASE("range conversion is an exact affine round trip") {
  const Tensor t = testing::random_tensor(Shape{2, 3, 8, 8}, 1);
  const ImageBatch unit(t, ValueRange::kUnit);
  const ImageBatch sym = convert_range(unit, ValueRange::kSymmetric);
  CHECK(sym.range() == ValueRange::kSymmetric);
  CHECK(sym.data().at(1, 2, 3, 4) == doctest::Approx(2.0 * t.at(1, 2, 3, 4) - 1.0));
  const ImageBatch back = convert_range(sym, ValueRange::kUnit);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.data().values()[i] == doctest::Approx(t.values()[i]).epsilon(1e-6));
  CHECK_THROWS_AS(unit.require_range(ValueRange::kSymmetric), ContractError);
}

TEST_CASE("tensor slicing and concatenation") {
  const Tensor t = testing::random_tensor(Shape{3, 4, 2, 2}, 2);
  const Tensor c = t.slice_channels(1, 3);
  CHECK(c.shape() == Shape{3, 2, 2, 2});
  CHECK(c.at(2, 1, 1, 0) == t.at(2, 2, 1, 0));
  const Tensor b = t.slice_batch(1, 3);
  CHECK(b.at(0, 3, 0, 1) == t.at(1, 3, 0, 1));
  const Tensor joined = Tensor::concat_channels(t.slice_channels(0, 1), t.slice_channels(1, 4));
  CHECK(joined.shape() == t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(joined.values()[i] == t.values()[i]);
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a = make_rng(7, "stream", 3);
  Rng b = make_rng(7, "stream", 3);
  Rng c = make_rng(7, "stream", 4);
  Rng d = make_rng(7, "other", 3);
  const float x = a.normal();
  CHECK(x == b.normal());
  CHECK(x != c.normal());
  CHECK(x != d.normal());
  seed_all(42);
  Rng g1 = make_rng("s");
  seed_all(42);
  Rng g2 = make_rng("s");
  CHECK(g1.uniform() == g2.uniform());
  for (int i = 0; i < 200; ++i) CHECK(a.below(5) < 5);
}

TEST_CASE("sha256 matches a known digest") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update(std::string_view("a")).update(std::string_view("bc"));
  CHECK(h.hex() == sha256_hex("abc"));
}

TEST_CASE("archive round trip preserves arrays and header") {
  testing::TempDir tmp("archive");
  Archive ar;
  ar.header["version"] = 1;
  ar.header["kind"] = "test";
  ar.put("w", {2, 3}, {1, 2, 3, 4, 5, 6});
  ar.put("b", {1}, {-0.5f});
  write_archive(tmp.path() / "a.rdck", ar);
  const Archive back = read_archive(tmp.path() / "a.rdck");
  CHECK(back.header.at("kind") == "test");
  CHECK(back.get("w").dims == std::vector<int>{2, 3});
  CHECK(back.get("w").values[5] == 6.0f);
  CHECK(back.get("b").values[0] == -0.5f);
  CHECK(back.find("missing") == nullptr);

  std::ofstream(tmp.path() / "junk.rdck") << "not an archive";
  CHECK_THROWS(read_archive(tmp.path() / "junk.rdck"));
}

TEST_CASE("config rejects unknown keys with the field path") {
  nlohmann::json doc = to_json(RunConfig{});
  doc["student"]["hiden"] = 3;
  try {
    run_config_from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "student.hiden");
  }
  nlohmann::json bad_loss = to_json(RunConfig{});
  bad_loss["loss"]["kind"] = "mse";
  CHECK_THROWS_AS(run_config_from_json(bad_loss), ConfigError);
}

TEST_CASE("config round trips through json") {
  RunConfig c;
  c.seed = 9;
  c.student.hidden = 64;
  c.loss.kind = LossKind::kHuberLpipsKl;
  c.loss.term_weights = {{"kl", 0.1}};
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.loss.weight("kl") == 0.1);
  CHECK(back.loss.weight("huber") == 1.0);
}

TEST_CASE("overrides address nested objects and array elements") {
  nlohmann::json doc = to_json(RunConfig{});
  apply_override(doc, "student.hidden=48");
  apply_override(doc, "stages.1.steps=5");
  apply_override(doc, "teacher.resolution_bias=none");
  apply_override(doc, "eval_scales=[1.0,2.0]");
  const RunConfig c = run_config_from_json(doc);
  CHECK(c.student.hidden == 48);
  CHECK(c.stages.size() == 2);
  CHECK(c.stages[1].steps == 5);
  CHECK(c.teacher.resolution_bias == "none");
  CHECK(c.eval_scales.size() == 2);
  CHECK_THROWS_AS(apply_override(doc, "stages.7.steps=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "noequals"), ConfigError);
}

TEST_CASE("environment overrides output_dir and device") {
  testing::TempDir tmp("env");
  std::ofstream(tmp.path() / "c.json") << R"({"output_dir": "from_file", "seed": 3})";
  ::setenv("RDIST_OUTPUT_DIR", "from_env", 1);
  const RunConfig c = load_run_config(tmp.path() / "c.json");
  ::unsetenv("RDIST_OUTPUT_DIR");
  CHECK(c.output_dir == "from_env");
  CHECK(c.seed == 3);
  const RunConfig o = load_run_config(tmp.path() / "c.json", {"output_dir=explicit"});
  CHECK(o.output_dir == "explicit");
  CHECK_THROWS_AS(load_run_config(tmp.path() / "missing.json"), ConfigError);
}

}
