#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rdist/data/dataset.hpp"
#include "rdist/data/resize.hpp"
#include "rdist/eval/resolution_eval.hpp"

namespace rdist {

/// Label attached to every probe output: how latents on different grids are compared.
inline constexpr const char* kProbeSurrogate =
    "per-image L2 norm on the r latent grid; r0 latents upsampled bilinearly";

/// Per-image norms with S = student, T = teacher, U = bilinear latent upsampling r0 -> r grid,
/// x~_r = resize(x_r0 -> r):
///   A = |S(x~_r) - U S(x_r0)|, B = |U S(x_r0) - U T(x_r0)|, C = |U T(x_r0) - T(x_r)|,
///   total = |S(x~_r) - T(x_r)|  (so total <= A + B + C per image).
struct ErrorDecomposition {
  Resolution r0;
  Resolution r;
  double term_a = 0.0;
  double term_b = 0.0;
  double term_c = 0.0;
  double total = 0.0;
  std::vector<double> per_image_a, per_image_b, per_image_c, per_image_total;
  /// Images where total exceeds A + B + C beyond float tolerance.
  int bound_violations = 0;

  nlohmann::json to_json() const;
};

ErrorDecomposition decompose_error(const EncodeFn& student, const EncodeFn& teacher, const SubsetManifest& data,
                                   const Resolution& r0, const Resolution& r, ResizeMethod method = ResizeMethod::kBilinear);

/// Mean per-image |S(x) - T(x)| at r0.
double epsilon_alignment(const EncodeFn& student, const EncodeFn& teacher, const SubsetManifest& data, const Resolution& r0);

struct SweetSpotGap {
  std::string metric;
  ScaleFactor r_sweet_teacher;
  ScaleFactor r_sweet_student;
  double gap = 0.0;
  double epsilon_align = 0.0;

  nlohmann::json to_json() const;
};

SweetSpotGap sweet_spot_gap(const std::vector<EvalRecord>& records_teacher, const std::vector<EvalRecord>& records_student,
                            double eps_align, const std::string& metric = "mse");

}  // namespace rdist
