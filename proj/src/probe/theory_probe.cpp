#include "rdist/probe/theory_probe.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "rdist/metrics/metrics.hpp"

namespace rdist {
namespace {

Tensor to_grid(const Tensor& z, const Grid& g) {
  return resize_tensor(z, g.h, g.w, ResizeMethod::kBilinear, false);
}

std::vector<double> per_image_dist(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ContractError("probe: latent shapes differ");
  std::vector<double> out(a.n());
  const std::size_t per = a.shape().image_size();
  for (int n = 0; n < a.n(); ++n) {
    const float* p = a.image(n);
    const float* q = b.image(n);
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = static_cast<double>(p[i]) - q[i];
      s += d * d;
    }
    out[n] = std::sqrt(s);
  }
  return out;
}

double norm_of(const Tensor& t, int n) {
  double s = 0.0;
  const float* p = t.image(n);
  for (std::size_t i = 0; i < t.shape().image_size(); ++i) s += static_cast<double>(p[i]) * p[i];
  return std::sqrt(s);
}

}  // namespace

nlohmann::json ErrorDecomposition::to_json() const {
  return {{"r0", r0.str()},
          {"r", r.str()},
          {"term_a", term_a},
          {"term_b", term_b},
          {"term_c", term_c},
          {"total", total},
          {"bound", term_a + term_b + term_c},
          {"bound_violations", bound_violations},
          {"n_images", per_image_total.size()},
          {"surrogate", kProbeSurrogate}};
}

ErrorDecomposition decompose_error(const EncodeFn& student, const EncodeFn& teacher, const SubsetManifest& data,
                                   const Resolution& r0, const Resolution& r, ResizeMethod method) {
  r0.require_divisible(kDownsampleFactor);
  r.require_divisible(kDownsampleFactor);
  if (r.height < r0.height || r.width < r0.width) {
    throw ContractError(fmt::format("decompose_error needs r >= r0, got {} < {}", r.str(), r0.str()));
  }
  const ImageBatch x_r0 = load_all(data, r0);
  const ImageBatch x_r = r == r0 ? x_r0 : load_all(data, r);
  const ImageBatch x_tilde = resize_images(x_r0, r, method, false);
  const Grid grid = r.latent_grid();

  const Tensor s_tilde = student(x_tilde).data();
  const Tensor s_0 = to_grid(student(x_r0).data(), grid);
  const Tensor t_0 = to_grid(teacher(x_r0).data(), grid);
  const Tensor t_r = teacher(x_r).data();

  ErrorDecomposition d;
  d.r0 = r0;
  d.r = r;
  d.per_image_a = per_image_dist(s_tilde, s_0);
  d.per_image_b = per_image_dist(s_0, t_0);
  d.per_image_c = per_image_dist(t_0, t_r);
  d.per_image_total = per_image_dist(s_tilde, t_r);
  for (std::size_t i = 0; i < d.per_image_total.size(); ++i) {
    const double bound = d.per_image_a[i] + d.per_image_b[i] + d.per_image_c[i];
    const double scale = norm_of(s_tilde, static_cast<int>(i)) + norm_of(t_r, static_cast<int>(i));
    if (d.per_image_total[i] > bound + 1e-6 * (1.0 + scale)) ++d.bound_violations;
  }
  d.term_a = mean_std(d.per_image_a).first;
  d.term_b = mean_std(d.per_image_b).first;
  d.term_c = mean_std(d.per_image_c).first;
  d.total = mean_std(d.per_image_total).first;
  return d;
}

double epsilon_alignment(const EncodeFn& student, const EncodeFn& teacher, const SubsetManifest& data, const Resolution& r0) {
  r0.require_divisible(kDownsampleFactor);
  const ImageBatch x = load_all(data, r0);
  return mean_std(per_image_dist(student(x).data(), teacher(x).data())).first;
}

nlohmann::json SweetSpotGap::to_json() const {
  return {{"metric", metric},
          {"r_sweet_teacher", r_sweet_teacher.value()},
          {"r_sweet_student", r_sweet_student.value()},
          {"gap", gap},
          {"epsilon_align", epsilon_align}};
}

SweetSpotGap sweet_spot_gap(const std::vector<EvalRecord>& records_teacher, const std::vector<EvalRecord>& records_student,
                            double eps_align, const std::string& metric) {
  auto grid = [](const std::vector<EvalRecord>& rs) {
    std::set<ScaleFactor> g;
    for (const auto& r : rs) g.insert(r.scale);
    return g;
  };
  if (grid(records_teacher) != grid(records_student)) throw ContractError("sweet_spot_gap: scale grids differ");
  SweetSpotGap out;
  out.metric = metric;
  out.r_sweet_teacher = find_sweet_spot(records_teacher, metric);
  out.r_sweet_student = find_sweet_spot(records_student, metric);
  out.gap = std::abs(out.r_sweet_student.value() - out.r_sweet_teacher.value());
  out.epsilon_align = eps_align;
  return out;
}

}  // namespace rdist
