#include "rdist/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

namespace rdist {
namespace {

void require_same(const ImageBatch& x, const ImageBatch& y, const char* what) {
  if (x.data().shape() != y.data().shape()) {
    throw ContractError(fmt::format("{}: shape mismatch {} vs {}", what, x.data().shape().str(), y.data().shape().str()));
  }
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of an (h, w) plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int ks = static_cast<int>(k.size());
  const int oh = h - ks + 1;
  const int ow = w - ks + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < ks; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < ks; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradient-features

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane make_plane(int h, int w) { return Plane{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)}; }

Plane diff_x(const Plane& p) {
  Plane o = make_plane(p.h, p.w - 1);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) o.at(y, x) = p.at(y, x + 1) - p.at(y, x);
  return o;
}
Plane diff_y(const Plane& p) {
  Plane o = make_plane(p.h - 1, p.w);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) o.at(y, x) = p.at(y + 1, x) - p.at(y, x);
  return o;
}
Plane box2(const Plane& p) {
  Plane o = make_plane(p.h / 2, p.w / 2);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
  return o;
}
void diff_x_t(const Plane& g, Plane& dst) {
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      dst.at(y, x) -= g.at(y, x);
      dst.at(y, x + 1) += g.at(y, x);
    }
}
void diff_y_t(const Plane& g, Plane& dst) {
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      dst.at(y, x) -= g.at(y, x);
      dst.at(y + 1, x) += g.at(y, x);
    }
}
void box2_t(const Plane& g, Plane& dst) {
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const double q = 0.25 * g.at(y, x);
      dst.at(2 * y, 2 * x) += q;
      dst.at(2 * y, 2 * x + 1) += q;
      dst.at(2 * y + 1, 2 * x) += q;
      dst.at(2 * y + 1, 2 * x + 1) += q;
    }
}

double mean_sq(const Plane& p) {
  double s = 0.0;
  for (double v : p.v) s += v * v;
  return p.v.empty() ? 0.0 : s / static_cast<double>(p.v.size());
}

class GradientFeatures final : public PerceptualBackend {
 public:
  static constexpr int kGroups = 5;

  std::string id() const override { return "gradient-features"; }

  std::vector<double> distance(const ImageBatch& x, const ImageBatch& y) const override {
    check(x, y);
    std::vector<double> out(x.size(), 0.0);
    for (int n = 0; n < x.size(); ++n) {
      for (int c = 0; c < x.channels(); ++c) {
        const Plane e = residual(x, y, n, c);
        const Plane b = box2(e);
        const double d = mean_sq(diff_x(e)) + mean_sq(diff_y(e)) + mean_sq(b) + mean_sq(diff_x(b)) + mean_sq(diff_y(b));
        out[n] += d / (kGroups * x.channels());
      }
    }
    return out;
  }

  Tensor distance_grad(const ImageBatch& x, const ImageBatch& y) const override {
    check(x, y);
    Tensor g(x.data().shape());
    const double scale = 2.0 / (kGroups * x.channels() * static_cast<double>(x.size()));
    for (int n = 0; n < x.size(); ++n) {
      for (int c = 0; c < x.channels(); ++c) {
        const Plane e = residual(x, y, n, c);
        Plane acc = make_plane(e.h, e.w);
        auto scaled = [](Plane p) {
          const double inv = p.v.empty() ? 0.0 : 1.0 / static_cast<double>(p.v.size());
          for (double& v : p.v) v *= inv;
          return p;
        };
        diff_x_t(scaled(diff_x(e)), acc);
        diff_y_t(scaled(diff_y(e)), acc);
        const Plane b = box2(e);
        Plane acc_b = make_plane(b.h, b.w);
        diff_x_t(scaled(diff_x(b)), acc_b);
        diff_y_t(scaled(diff_y(b)), acc_b);
        const Plane bs = scaled(b);
        for (std::size_t i = 0; i < acc_b.v.size(); ++i) acc_b.v[i] += bs.v[i];
        box2_t(acc_b, acc);
        float* dst = g.plane(n, c);
        for (std::size_t i = 0; i < acc.v.size(); ++i) dst[i] = static_cast<float>(scale * acc.v[i]);
      }
    }
    return g;
  }

 private:
  static void check(const ImageBatch& x, const ImageBatch& y) {
    require_same(x, y, "gradient-features");
    if (x.data().h() < 4 || x.data().w() < 4) throw ContractError("gradient-features needs images of at least 4x4");
  }
  static Plane residual(const ImageBatch& x, const ImageBatch& y, int n, int c) {
    Plane e = make_plane(x.data().h(), x.data().w());
    const float* a = x.data().plane(n, c);
    const float* b = y.data().plane(n, c);
    for (std::size_t i = 0; i < e.v.size(); ++i) e.v[i] = static_cast<double>(a[i]) - b[i];
    return e;
  }
};

class PatchStats final : public FeatureBackend {
 public:
  std::string id() const override { return "patch-stats"; }
  int feature_dim() const override { return 12; }

  Eigen::MatrixXd extract(const ImageBatch& x) const override {
    const ImageBatch u = convert_range(x, ValueRange::kUnit);
    const Tensor& t = u.data();
    Eigen::MatrixXd f(t.n(), feature_dim());
    const int h = t.h(), w = t.w();
    for (int n = 0; n < t.n(); ++n) {
      for (int c = 0; c < std::min(3, t.c()); ++c) {
        const float* p = t.plane(n, c);
        double sum = 0.0, sq = 0.0, gx = 0.0, gy = 0.0;
        for (int yy = 0; yy < h; ++yy) {
          for (int xx = 0; xx < w; ++xx) {
            const double v = p[yy * w + xx];
            sum += v;
            sq += v * v;
            if (xx + 1 < w) gx += std::abs(p[yy * w + xx + 1] - v);
            if (yy + 1 < h) gy += std::abs(p[(yy + 1) * w + xx] - v);
          }
        }
        const double count = static_cast<double>(h) * w;
        const double mean = sum / count;
        f(n, 4 * c + 0) = mean;
        f(n, 4 * c + 1) = std::sqrt(std::max(0.0, sq / count - mean * mean));
        f(n, 4 * c + 2) = w > 1 ? gx / (h * (w - 1.0)) : 0.0;
        f(n, 4 * c + 3) = h > 1 ? gy / ((h - 1.0) * w) : 0.0;
      }
    }
    return f;
  }
};

template <typename Ptr>
struct Registry {
  std::mutex mu;
  std::map<std::string, std::function<Ptr()>> factories;

  Ptr find(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = factories.find(id);
    return it == factories.end() ? nullptr : it->second();
  }
};

Registry<PerceptualPtr>& perceptual_registry() {
  static Registry<PerceptualPtr> r{{}, {{"gradient-features", [] { return PerceptualPtr(std::make_shared<GradientFeatures>()); }}}};
  return r;
}

Registry<FeaturePtr>& feature_registry() {
  static Registry<FeaturePtr> r{{}, {{"patch-stats", [] { return FeaturePtr(std::make_shared<PatchStats>()); }}}};
  return r;
}

}  // namespace

std::vector<double> mse(const ImageBatch& x, const ImageBatch& y) {
  require_same(x, y, "mse");
  x.require_range(ValueRange::kUnit);
  y.require_range(ValueRange::kUnit);
  const std::size_t per = x.data().shape().image_size();
  std::vector<double> out(x.size());
  for (int n = 0; n < x.size(); ++n) {
    const float* a = x.data().image(n);
    const float* b = y.data().image(n);
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      s += d * d;
    }
    out[n] = s / static_cast<double>(per);
  }
  return out;
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, -10.0 * std::log10(mse_value));
}

PsnrResult psnr(const ImageBatch& x, const ImageBatch& y) {
  PsnrResult r;
  for (double m : mse(x, y)) {
    r.values.push_back(psnr_from_mse(m));
    r.capped.push_back(m <= 0.0 || -10.0 * std::log10(m) > kPsnrCapDb);
  }
  return r;
}

std::vector<double> ssim(const ImageBatch& x, const ImageBatch& y, const SsimOptions& opt) {
  require_same(x, y, "ssim");
  x.require_range(ValueRange::kUnit);
  y.require_range(ValueRange::kUnit);
  const int h = x.data().h();
  const int w = x.data().w();
  if (opt.window % 2 == 0 || opt.window < 1) throw ContractError("ssim window must be odd");
  if (opt.window > std::min(h, w)) {
    throw ContractError(fmt::format("ssim window {} exceeds image size {}x{}", opt.window, h, w));
  }
  const auto k = gaussian_window(opt.window, opt.sigma);
  const double c1 = opt.k1 * opt.k1;
  const double c2 = opt.k2 * opt.k2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> out(x.size(), 0.0);
  std::vector<double> a(hw), b(hw), aa(hw), bb(hw), ab(hw);
  for (int n = 0; n < x.size(); ++n) {
    for (int c = 0; c < x.channels(); ++c) {
      const float* pa = x.data().plane(n, c);
      const float* pb = y.data().plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        a[i] = pa[i];
        b[i] = pb[i];
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const auto mu_a = filter_valid(a, h, w, k);
      const auto mu_b = filter_valid(b, h, w, k);
      const auto e_aa = filter_valid(aa, h, w, k);
      const auto e_bb = filter_valid(bb, h, w, k);
      const auto e_ab = filter_valid(ab, h, w, k);
      double acc = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
      }
      out[n] += acc / static_cast<double>(mu_a.size()) / x.channels();
    }
  }
  return out;
}

void register_perceptual_backend(const std::string& id, std::function<PerceptualPtr()> factory) {
  auto& r = perceptual_registry();
  std::lock_guard lock(r.mu);
  r.factories[id] = std::move(factory);
}

PerceptualPtr find_perceptual_backend(const std::string& id) { return id.empty() ? nullptr : perceptual_registry().find(id); }

void register_feature_backend(const std::string& id, std::function<FeaturePtr()> factory) {
  auto& r = feature_registry();
  std::lock_guard lock(r.mu);
  r.factories[id] = std::move(factory);
}

FeaturePtr find_feature_backend(const std::string& id) { return id.empty() ? nullptr : feature_registry().find(id); }

std::vector<double> lpips(const ImageBatch& x, const ImageBatch& y, const PerceptualBackend& backend) {
  require_same(x, y, "lpips");
  x.require_range(ValueRange::kUnit);
  y.require_range(ValueRange::kUnit);
  return backend.distance(x, y);
}

FrechetResult frechet_distance(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b) {
  if (feats_a.cols() != feats_b.cols()) throw ContractError("frechet_distance: feature dims differ");
  if (feats_a.rows() < 2 || feats_b.rows() < 2) throw ContractError("frechet_distance needs at least 2 samples per set");
  if (!feats_a.allFinite() || !feats_b.allFinite()) throw ContractError("frechet_distance: non-finite features");
  const Eigen::Index d = feats_a.cols();
  auto moments = [d](const Eigen::MatrixXd& f) {
    const Eigen::VectorXd mu = f.colwise().mean();
    const Eigen::MatrixXd centered = f.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
    cov += kFrechetRegularizer * Eigen::MatrixXd::Identity(d, d);
    return std::pair{mu, cov};
  };
  const auto [mu_a, cov_a] = moments(feats_a);
  const auto [mu_b, cov_b] = moments(feats_b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
  if (eig_a.eigenvalues().minCoeff() < 0.0) throw ContractError("frechet_distance: covariance is not PSD after regularization");
  const Eigen::MatrixXd sqrt_a = eig_a.operatorSqrt();
  const Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_inner(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) tr_sqrt += std::sqrt(std::max(0.0, eig_inner.eigenvalues()(i)));

  FrechetResult r;
  r.value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  if (r.value < 0.0) {
    r.value = 0.0;
    r.clamped = true;
  }
  r.undersampled = feats_a.rows() <= d || feats_b.rows() <= d;
  return r;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - m) * (x - m);
  return {m, std::sqrt(q / static_cast<double>(v.size()))};
}

void MetricReport::add(const std::string& metric, std::vector<double> values) {
  const auto [m, s] = mean_std(values);
  mean[metric] = m;
  std[metric] = s;
  n = static_cast<int>(values.size());
  per_image[metric] = std::move(values);
}

bool MetricReport::has(const std::string& metric) const {
  return mean.count(metric) > 0 || set_metrics.count(metric) > 0;
}

double MetricReport::value(const std::string& metric) const {
  if (auto it = mean.find(metric); it != mean.end()) return it->second;
  if (auto it = set_metrics.find(metric); it != set_metrics.end()) return it->second;
  throw ContractError("metric '" + metric + "' is not in the report");
}

nlohmann::json MetricReport::to_json() const {
  return {{"n", n},        {"per_image", per_image}, {"mean", mean},   {"std", std},
          {"set", set_metrics}, {"unavailable", unavailable}, {"backends", backends}, {"flags", flags}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.n = j.at("n").get<int>();
  r.per_image = j.at("per_image").get<std::map<std::string, std::vector<double>>>();
  r.mean = j.at("mean").get<std::map<std::string, double>>();
  r.std = j.at("std").get<std::map<std::string, double>>();
  r.set_metrics = j.at("set").get<std::map<std::string, double>>();
  r.unavailable = j.at("unavailable").get<std::set<std::string>>();
  r.backends = j.at("backends").get<std::map<std::string, std::string>>();
  r.flags = j.at("flags").get<std::vector<std::string>>();
  return r;
}

MetricReport compute_metrics(const ImageBatch& reconstructed, const ImageBatch& reference, const MetricOptions& opt) {
  const ImageBatch x = convert_range(reconstructed, ValueRange::kUnit);
  const ImageBatch y = convert_range(reference, ValueRange::kUnit);
  require_same(x, y, "compute_metrics");
  MetricReport r;
  const auto m = mse(x, y);
  r.add("mse", m);
  const PsnrResult p = psnr(x, y);
  for (std::size_t i = 0; i < p.capped.size(); ++i) {
    if (p.capped[i]) r.flags.push_back(fmt::format("psnr_capped:{}", i));
  }
  r.add("psnr", p.values);
  const Resolution res = x.resolution();
  if (opt.ssim.window <= std::min(res.height, res.width)) {
    r.add("ssim", ssim(x, y, opt.ssim));
  } else {
    r.unavailable.insert("ssim");
  }
  if (opt.perceptual) {
    r.add("lpips", lpips(x, y, *opt.perceptual));
    r.backends["lpips"] = opt.perceptual->id();
  } else {
    r.unavailable.insert("lpips");
  }
  if (opt.features && x.size() >= 2) {
    const FrechetResult f = frechet_distance(opt.features->extract(x), opt.features->extract(y));
    r.set_metrics["rfid"] = f.value;
    r.backends["rfid"] = opt.features->id();
    if (f.clamped) r.flags.push_back("rfid_clamped");
    if (f.undersampled) r.flags.push_back("rfid_undersampled");
  } else {
    r.unavailable.insert("rfid");
  }
  r.n = x.size();
  return r;
}

}  // namespace rdist
