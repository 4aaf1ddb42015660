#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "rdist/data/dataset.hpp"
#include "rdist/eval/resolution_eval.hpp"
#include "rdist/teacher/teacher.hpp"

namespace rdist {

/// Encoder that also receives stable per-image ids, so seeded sampling does not depend on
/// batch composition or image order.
using KeyedEncodeFn = std::function<LatentBatch(const ImageBatch&, std::span<const std::string> image_ids)>;

KeyedEncodeFn keyed(EncodeFn encode);
/// Teacher encoder for statistics: sampled latents with per-(image, resolution) noise streams, or the mean.
KeyedEncodeFn teacher_stats_encoder(TeacherPtr teacher, bool sampled, std::uint64_t seed);

struct LatentStats {
  std::string model_id;
  Resolution resolution;
  double mean = 0.0;
  double std = 0.0;
  int n_images = 0;
  std::vector<double> channel_mean;
  std::vector<double> channel_std;

  nlohmann::json to_json() const;
};

/// Global scalar mean/std over every latent element at each resolution.
std::vector<LatentStats> latent_stats_sweep(const std::string& model_id, const KeyedEncodeFn& encode,
                                            const SubsetManifest& data, const std::vector<Resolution>& resolutions,
                                            int batch_size = 8);

struct GaussianSummary {
  double mu = 0.0;
  double sigma = 1.0;
};

/// KL(T || S) for scalar Gaussians, natural log.
double gaussian_kl(const GaussianSummary& t, const GaussianSummary& s);

/// Jensen-Shannon divergence by adaptive Gauss-Kronrod quadrature over the union of the
/// +-10 sigma ranges. Throws std::runtime_error if the quadrature does not converge.
double gaussian_js(const GaussianSummary& t, const GaussianSummary& s, int quadrature_points = 4096);

struct DivergenceRow {
  Resolution resolution;
  double kl = 0.0;
  double js = 0.0;
};

struct DivergenceTable {
  std::vector<DivergenceRow> rows;
  Resolution argmin_kl;
  Resolution argmin_js;

  nlohmann::json to_json() const;
};

/// Ties in the minimizer go to the smallest resolution.
DivergenceTable divergence_sweep(const std::vector<LatentStats>& teacher_stats, const std::vector<LatentStats>& student_stats);

/// z_a = (1 - a) z1 + a z2 for each alpha in [0, 1].
std::vector<LatentBatch> interpolate_latents(const LatentBatch& z1, const LatentBatch& z2, const std::vector<double>& alphas);

struct ContinuityStep {
  int index = 0;
  bool ok = true;
  std::string error;
  std::optional<double> adjacent_mse;   // vs the previous decoded frame
  std::optional<double> reference_mse;  // vs the reference batch
};

/// Decodes each latent on the path; a failed frame is marked and the rest continue.
std::vector<ContinuityStep> continuity_report(const DecodeFn& decode, const std::vector<LatentBatch>& path,
                                              const ImageBatch& reference);

/// 2-D reducer over the rows of a (samples x dims) matrix.
using Reducer = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
void register_reducer(const std::string& id, Reducer reducer);
/// Built-in: "pca2". Returns nullopt for "none", empty, or unknown ids.
std::optional<Reducer> find_reducer(const std::string& id);

struct EmbeddingExport {
  Grid common_grid;
  std::size_t rows = 0;
  bool reduced = false;
  /// model -> resolution -> mean per-image RMS latent norm.
  std::map<std::string, std::map<Resolution, double>> radial;
};

/// Writes one CSV row per (model, resolution, image): labels, optional 2-D coordinates, then the
/// flattened latent resized to the smallest grid present.
EmbeddingExport export_embeddings(const std::map<std::string, std::map<Resolution, LatentBatch>>& latents,
                                  const std::string& reducer_id, const std::filesystem::path& csv_path);

}  // namespace rdist
