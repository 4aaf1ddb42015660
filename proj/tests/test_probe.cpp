#include <doctest.h>

#include "rdist/probe/theory_probe.hpp"
#include "rdist/student/student_encoder.hpp"
#include "support.hpp"

using namespace rdist;

TEST_SUITE("probe") {

TEST_CASE("decomposition bounds the total and reduces to alignment at r0") {
  testing::TempDir tmp("probe");
  write_synthetic_dataset(tmp.path(), 4, 32, 2);
  DatasetSpec spec;
  spec.root = tmp.path();
  spec.split = Split::kVal;
  const SubsetManifest m = full_manifest(spec);
  const TeacherPtr t = make_toy_teacher(0, ResolutionBias::kHighresSweet);
  StudentConfig c;
  c.hidden = 4;
  c.blocks_per_stage = 1;
  auto s = std::make_shared<StudentEncoder>(build_student(c, 1));
  const EncodeFn se = [s](const ImageBatch& x) { return s->forward(x); };
  const EncodeFn te = [t](const ImageBatch& x) { return mean_latent(t->encode(x)); };

  const Resolution r0 = Resolution::square(16);
  const double eps = epsilon_alignment(se, te, m, r0);
  const ErrorDecomposition same = decompose_error(se, te, m, r0, r0);
  CHECK(same.total == doctest::Approx(eps).epsilon(1e-6));
  CHECK(same.term_a == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(same.term_c == doctest::Approx(0.0).epsilon(1e-6));

  for (int side : {24, 32}) {
    const ErrorDecomposition d = decompose_error(se, te, m, r0, Resolution::square(side));
    CHECK(d.bound_violations == 0);
    REQUIRE(d.per_image_total.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(d.per_image_total[i] <= d.per_image_a[i] + d.per_image_b[i] + d.per_image_c[i] + 1e-6);
    }
    CHECK(d.to_json().contains("surrogate"));
  }
  CHECK_THROWS_AS(decompose_error(se, te, m, Resolution::square(32), r0), ContractError);
}

TEST_CASE("sweet-spot gap compares argmins on a shared grid") {
  auto rec = [](const std::string& id, double scale, double mse) {
    EvalRecord r;
    r.model_id = id;
    r.scale = ScaleFactor(scale);
    r.report.add("mse", {mse});
    return r;
  };
  const std::vector<EvalRecord> t{rec("t", 1.0, 3), rec("t", 2.0, 1), rec("t", 3.0, 2)};
  const std::vector<EvalRecord> s{rec("s", 1.0, 3), rec("s", 2.0, 4), rec("s", 3.0, 2)};
  const SweetSpotGap g = sweet_spot_gap(t, s, 0.25);
  CHECK(g.r_sweet_teacher == ScaleFactor(2.0));
  CHECK(g.r_sweet_student == ScaleFactor(3.0));
  CHECK(g.gap == doctest::Approx(1.0));
  CHECK(g.epsilon_align == 0.25);
  CHECK_THROWS_AS(sweet_spot_gap(t, {rec("s", 1.0, 3), rec("s", 4.0, 1)}, 0.0), ContractError);
}

}
