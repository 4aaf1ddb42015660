#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "rdist/core/types.hpp"

namespace rdist {

/// Per-image mean squared error. Both batches must be in [0,1] with equal shapes.
std::vector<double> mse(const ImageBatch& x, const ImageBatch& y);

inline constexpr double kPsnrCapDb = 100.0;

struct PsnrResult {
  std::vector<double> values;
  std::vector<bool> capped;  // true where MSE was zero
};

/// 10 log10(1 / MSE) per image, capped at kPsnrCapDb.
PsnrResult psnr(const ImageBatch& x, const ImageBatch& y);
double psnr_from_mse(double mse_value);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean local SSIM over valid window positions with a Gaussian window, averaged over channels.
std::vector<double> ssim(const ImageBatch& x, const ImageBatch& y, const SsimOptions& opt = {});

/// Perceptual distance between image batches in [0,1].
class PerceptualBackend {
 public:
  virtual ~PerceptualBackend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> distance(const ImageBatch& x, const ImageBatch& y) const = 0;
  /// d(mean_i distance_i)/dx, or empty when the backend is not differentiable.
  virtual Tensor distance_grad(const ImageBatch&, const ImageBatch&) const { return {}; }
};

/// Per-image feature vectors used for Frechet distances.
class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual std::string id() const = 0;
  virtual int feature_dim() const = 0;
  /// One row per image.
  virtual Eigen::MatrixXd extract(const ImageBatch& x) const = 0;
};

using PerceptualPtr = std::shared_ptr<const PerceptualBackend>;
using FeaturePtr = std::shared_ptr<const FeatureBackend>;

/// Built-in "gradient-features": squared distance between finite-difference and box-filtered
/// responses at two scales. A fixed linear stand-in for learned perceptual metrics.
void register_perceptual_backend(const std::string& id, std::function<PerceptualPtr()> factory);
/// nullptr when `id` is unknown or empty.
PerceptualPtr find_perceptual_backend(const std::string& id);

/// Built-in "patch-stats": per-channel mean, std, and mean absolute gradients.
void register_feature_backend(const std::string& id, std::function<FeaturePtr()> factory);
FeaturePtr find_feature_backend(const std::string& id);

std::vector<double> lpips(const ImageBatch& x, const ImageBatch& y, const PerceptualBackend& backend);

struct FrechetResult {
  double value = 0.0;
  bool clamped = false;       // a tiny negative value was clamped to 0
  bool undersampled = false;  // fewer samples than feature dims
};

inline constexpr double kFrechetRegularizer = 1e-6;

/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}); rows are samples.
FrechetResult frechet_distance(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b);

struct MetricReport {
  int n = 0;
  std::map<std::string, std::vector<double>> per_image;
  std::map<std::string, double> mean;
  std::map<std::string, double> std;
  /// Set-level metrics such as rfid.
  std::map<std::string, double> set_metrics;
  std::set<std::string> unavailable;
  std::map<std::string, std::string> backends;
  std::vector<std::string> flags;

  void add(const std::string& metric, std::vector<double> values);
  bool has(const std::string& metric) const;
  double value(const std::string& metric) const;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

struct MetricOptions {
  PerceptualPtr perceptual;
  FeaturePtr features;
  SsimOptions ssim;
};

/// MSE, PSNR, SSIM always; LPIPS and rFID when their backends are present.
/// Inputs may be in either range and are compared in [0,1].
MetricReport compute_metrics(const ImageBatch& reconstructed, const ImageBatch& reference, const MetricOptions& opt);

}  // namespace rdist
