#include <doctest.h>

#include <cmath>

#include "rdist/eval/resolution_eval.hpp"
#include "support.hpp"

using namespace rdist;

namespace {

// Pass-through "codec": image channels ride in the first three latent channels at full resolution.
LatentBatch stub_encode(const ImageBatch& x) {
  Tensor z(Shape{x.size(), kLatentChannels, x.data().h(), x.data().w()});
  for (int n = 0; n < x.size(); ++n) {
    for (int c = 0; c < 3; ++c) std::copy_n(x.data().plane(n, c), x.data().shape().plane_size(), z.plane(n, c));
  }
  return LatentBatch(z, LatentSource::kDerived);
}

ImageBatch stub_decode(const LatentBatch& z) { return ImageBatch(z.data().slice_channels(0, 3), ValueRange::kSymmetric); }

ImageBatch sym_random(Shape s, std::uint64_t seed) { return ImageBatch(testing::random_tensor(s, seed, -1, 1), ValueRange::kSymmetric); }

EvalRecord record_with(double scale, double mse_value, double psnr_value) {
  EvalRecord r;
  r.model_id = "m";
  r.scale = ScaleFactor(scale);
  r.report.add("mse", {mse_value});
  r.report.add("psnr", {psnr_value});
  return r;
}

SubsetManifest small_val_set(const std::filesystem::path& root, int count) {
  write_synthetic_dataset(root, count, 32, 3);
  DatasetSpec spec;
  spec.root = root;
  spec.split = Split::kVal;
  return full_manifest(spec);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("scale 1.0 remap equals the plain pipeline") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kHighresSweet);
  const SweepModel m = teacher_sweep_model("t", t);
  const ImageBatch x = sym_random(Shape{2, 3, 32, 32}, 1);
  const ImageBatch plain = m.decode(m.encode(x));
  for (RemapPosition pos : {RemapPosition::kPre, RemapPosition::kPost, RemapPosition::kNone}) {
    for (ResizeMethod meth : {ResizeMethod::kBilinear, ResizeMethod::kBicubic, ResizeMethod::kNearest}) {
      RemapProtocol p;
      p.scale = ScaleFactor(1.0);
      p.position = pos;
      p.method = meth;
      const ImageBatch r = remap_roundtrip(m.encode, m.decode, x, p);
      for (std::size_t i = 0; i < r.data().numel(); ++i) CHECK(std::abs(r.data().values()[i] - plain.data().values()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("identity stubs isolate the interpolation loss") {
  const ImageBatch x = sym_random(Shape{1, 3, 16, 16}, 2);
  RemapProtocol p;
  p.scale = ScaleFactor(2.0);
  const ImageBatch r = remap_roundtrip(stub_encode, stub_decode, x, p);
  const ImageBatch expected =
      resize_images(resize_images(x, Resolution::square(32), ResizeMethod::kBilinear, false), Resolution::square(16),
                    ResizeMethod::kBilinear, true);
  for (std::size_t i = 0; i < r.data().numel(); ++i) CHECK(r.data().values()[i] == doctest::Approx(expected.data().values()[i]));

  p.position = RemapPosition::kPost;
  CHECK(remap_roundtrip(stub_encode, stub_decode, x, p).resolution() == x.resolution());
  CHECK_THROWS_AS(remap_roundtrip(stub_encode, stub_decode, ImageBatch(x.data(), ValueRange::kUnit), p), ContractError);
}

TEST_CASE("protocol hash covers method, position, and antialias but not scale") {
  RemapProtocol a, b;
  b.scale = ScaleFactor(3.0);
  CHECK(a.hash() == b.hash());
  b.method = ResizeMethod::kBicubic;
  CHECK(a.hash() != b.hash());
  RemapProtocol c;
  c.antialias_down = false;
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 12);
}

TEST_CASE("sweet spot follows metric direction and breaks ties toward the smaller scale") {
  const std::vector<EvalRecord> recs{record_with(2.0, 1.0, 30.0), record_with(0.5, 3.0, 20.0), record_with(1.0, 1.0, 30.0),
                                     record_with(4.0, 2.0, 25.0)};
  CHECK(find_sweet_spot(recs, "mse") == ScaleFactor(1.0));
  CHECK(find_sweet_spot(recs, "psnr") == ScaleFactor(1.0));
  CHECK_THROWS_AS(find_sweet_spot(recs, "ssim"), ContractError);
  CHECK_THROWS_AS(find_sweet_spot(recs, "accuracy"), ContractError);
  CHECK_THROWS_AS(find_sweet_spot({record_with(1.0, 1.0, 1.0)}, "mse"), ContractError);
  CHECK(lower_is_better("rfid"));
  CHECK_FALSE(lower_is_better("ssim"));
}

TEST_CASE("sweep emits one record per cell, persists them, and resumes") {
  testing::TempDir tmp("sweep");
  const SubsetManifest data = small_val_set(tmp.path() / "data", 3);
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  int calls = 0;
  SweepModel counted = teacher_sweep_model("t", t);
  const EncodeFn inner = counted.encode;
  counted.encode = [&](const ImageBatch& x) {
    ++calls;
    return inner(x);
  };
  SweepModel failing{"bad", [](const ImageBatch& x) -> LatentBatch {
                       if (x.resolution().height > 16) throw std::runtime_error("too large");
                       return stub_encode(x);
                     },
                     stub_decode};
  SweepOptions opts;
  opts.resolution = Resolution::square(16);
  opts.batch_size = 2;
  opts.records_path = tmp.path() / "records.jsonl";
  const std::vector<ScaleFactor> scales{ScaleFactor(0.5), ScaleFactor(1.0), ScaleFactor(2.0)};
  const auto recs = sweep({counted, failing}, data, scales, RemapProtocol{}, opts);
  REQUIRE(recs.size() == 6);
  CHECK(recs[0].model_id == "t");
  CHECK(recs[2].scale == ScaleFactor(2.0));
  CHECK(recs[2].encoded == Resolution::square(32));
  for (const auto& r : recs) {
    CHECK(r.target == opts.resolution);
    if (r.model_id == "t") CHECK(r.report.n == 3);
  }
  CHECK(recs[3].ok);
  CHECK_FALSE(recs[5].ok);
  CHECK(recs[5].error.find("too large") != std::string::npos);
  CHECK(calls == 6);  // 3 scales x 2 batches

  const auto again = sweep({counted, failing}, data, scales, RemapProtocol{}, opts);
  CHECK(calls == 6);  // completed cells reloaded, not recomputed
  CHECK(again[1].report.to_json() == recs[1].report.to_json());
  CHECK(load_records(*opts.records_path).size() == 6 + 1);  // the failed cell is retried and re-appended
}

TEST_CASE("eval records round trip through json") {
  EvalRecord r = record_with(1.5, 0.01, 20.0);
  r.target = Resolution::square(32);
  r.encoded = Resolution::square(48);
  r.protocol.scale = r.scale;
  r.protocol.method = ResizeMethod::kBicubic;
  r.protocol.position = RemapPosition::kPost;
  const EvalRecord back = EvalRecord::from_json(r.to_json());
  CHECK(back.key() == r.key());
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("benchmark reports timing and footprint") {
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kNone);
  const BenchRecord b = benchmark("t", teacher_sweep_model("t", t).encode, Resolution::square(32), 3, 1, t->parameter_count());
  CHECK(b.ms_per_image >= 0.0);
  CHECK(b.parameter_bytes == 4 * t->parameter_count());
  CHECK_FALSE(b.peak_accelerator_mb.has_value());
  CHECK(b.to_json().at("peak_accelerator_mb") == "unavailable");
  CHECK(b.peak_rss_mb > 0.0);
}

}
