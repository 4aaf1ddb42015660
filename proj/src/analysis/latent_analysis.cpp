#include "rdist/analysis/latent_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include <Eigen/SVD>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "rdist/core/archive.hpp"
#include "rdist/data/resize.hpp"
#include "rdist/metrics/metrics.hpp"

namespace fs = std::filesystem;

namespace rdist {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void require_sigma(const GaussianSummary& g) {
  if (!(g.sigma > 0.0) || !std::isfinite(g.sigma)) throw ContractError(fmt::format("sigma must be > 0, got {}", g.sigma));
}

double log_normal_pdf(double x, const GaussianSummary& g) {
  const double z = (x - g.mu) / g.sigma;
  return -0.5 * z * z - std::log(g.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

Eigen::MatrixXd pca2(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixV().cols());
  Eigen::MatrixXd v = svd.matrixV().leftCols(k);
  // Fix the sign so each axis has a positive largest-magnitude loading.
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index idx = 0;
    v.col(c).cwiseAbs().maxCoeff(&idx);
    if (v(idx, c) < 0) v.col(c) *= -1.0;
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), 2);
  out.leftCols(k) = centered * v;
  return out;
}

struct ReducerRegistry {
  std::mutex mu;
  std::map<std::string, Reducer> reducers{{"pca2", pca2}};
};

ReducerRegistry& reducers() {
  static ReducerRegistry r;
  return r;
}

}  // namespace

KeyedEncodeFn keyed(EncodeFn encode) {
  return [encode = std::move(encode)](const ImageBatch& x, std::span<const std::string>) { return encode(x); };
}

KeyedEncodeFn teacher_stats_encoder(TeacherPtr teacher, bool sampled, std::uint64_t seed) {
  return [teacher, sampled, seed](const ImageBatch& x, std::span<const std::string> ids) {
    const GaussianLatent g = teacher->encode(x);
    if (!sampled) return mean_latent(g);
    if (ids.size() != static_cast<std::size_t>(x.size())) throw ContractError("one id per image required");
    Tensor z(g.mean.shape());
    const std::size_t per = z.shape().image_size();
    for (int n = 0; n < x.size(); ++n) {
      Rng rng = make_rng(seed, "latent_stats", fnv1a(fmt::format("{}@{}", ids[n], x.resolution().str())));
      const float* m = g.mean.image(n);
      const float* s = g.std.image(n);
      float* out = z.image(n);
      for (std::size_t i = 0; i < per; ++i) out[i] = m[i] + s[i] * rng.normal();
    }
    return LatentBatch(std::move(z), LatentSource::kTeacherSampled);
  };
}

nlohmann::json LatentStats::to_json() const {
  return {{"model_id", model_id},       {"resolution", resolution.str()}, {"mean", mean},
          {"std", std},                 {"n_images", n_images},           {"channel_mean", channel_mean},
          {"channel_std", channel_std}};
}

std::vector<LatentStats> latent_stats_sweep(const std::string& model_id, const KeyedEncodeFn& encode,
                                            const SubsetManifest& data, const std::vector<Resolution>& resolutions,
                                            int batch_size) {
  if (resolutions.empty()) throw ContractError("latent_stats_sweep: empty resolution grid");
  if (batch_size <= 0) throw ContractError("latent_stats_sweep: batch_size must be > 0");
  // Sorting the entries makes the aggregate independent of manifest order.
  std::vector<std::string> entries = data.entries;
  std::sort(entries.begin(), entries.end());

  std::vector<LatentStats> out;
  for (const Resolution& res : resolutions) {
    res.require_divisible(kDownsampleFactor);
    std::vector<double> sum(kLatentChannels, 0.0), sq(kLatentChannels, 0.0);
    double count_per_channel = 0.0;
    int n_images = 0;
    for (std::size_t b = 0; b < entries.size(); b += batch_size) {
      std::vector<Tensor> imgs;
      std::vector<std::string> ids;
      for (std::size_t i = b; i < std::min(entries.size(), b + batch_size); ++i) {
        try {
          imgs.push_back(load_image_at(data.base_dir / entries[i], res));
          ids.push_back(entries[i]);
        } catch (const std::exception&) {
          continue;
        }
      }
      if (imgs.empty()) continue;
      const ImageBatch x = convert_range(ImageBatch(Tensor::concat_batch(imgs), ValueRange::kUnit), ValueRange::kSymmetric);
      const LatentBatch z = encode(x, ids);
      const Tensor& t = z.data();
      for (int n = 0; n < t.n(); ++n) {
        for (int c = 0; c < t.c(); ++c) {
          const float* p = t.plane(n, c);
          for (std::size_t i = 0; i < t.shape().plane_size(); ++i) {
            sum[c] += p[i];
            sq[c] += static_cast<double>(p[i]) * p[i];
          }
        }
      }
      count_per_channel += static_cast<double>(t.n()) * t.shape().plane_size();
      n_images += t.n();
    }
    if (n_images == 0) throw ContractError("latent_stats_sweep: no decodable images");
    LatentStats st;
    st.model_id = model_id;
    st.resolution = res;
    st.n_images = n_images;
    double total = 0.0, total_sq = 0.0;
    for (int c = 0; c < kLatentChannels; ++c) {
      const double m = sum[c] / count_per_channel;
      st.channel_mean.push_back(m);
      st.channel_std.push_back(std::sqrt(std::max(0.0, sq[c] / count_per_channel - m * m)));
      total += sum[c];
      total_sq += sq[c];
    }
    const double count = count_per_channel * kLatentChannels;
    st.mean = total / count;
    st.std = std::sqrt(std::max(0.0, total_sq / count - st.mean * st.mean));
    out.push_back(std::move(st));
  }
  return out;
}

double gaussian_kl(const GaussianSummary& t, const GaussianSummary& s) {
  require_sigma(t);
  require_sigma(s);
  const double d = t.mu - s.mu;
  return std::log(s.sigma / t.sigma) + (t.sigma * t.sigma + d * d) / (2.0 * s.sigma * s.sigma) - 0.5;
}

double gaussian_js(const GaussianSummary& t, const GaussianSummary& s, int quadrature_points) {
  require_sigma(t);
  require_sigma(s);
  if (quadrature_points < 61) throw ContractError("gaussian_js needs at least 61 quadrature points");
  auto integrand = [&](double x) {
    const double lp = log_normal_pdf(x, t);
    const double lq = log_normal_pdf(x, s);
    const double lm = log_add_exp(lp, lq) - std::numbers::ln2;
    return 0.5 * (std::exp(lp) * (lp - lm) + std::exp(lq) * (lq - lm));
  };
  const double lo = std::min(t.mu - 10.0 * t.sigma, s.mu - 10.0 * s.sigma);
  const double hi = std::max(t.mu + 10.0 * t.sigma, s.mu + 10.0 * s.sigma);
  const unsigned depth = static_cast<unsigned>(std::ceil(std::log2(static_cast<double>(quadrature_points))));
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, lo, hi, depth, 1e-12, &error);
  if (!std::isfinite(value) || error > 1e-9 + 1e-7 * std::abs(value)) {
    throw std::runtime_error(fmt::format("gaussian_js quadrature did not converge (error estimate {:.3g})", error));
  }
  return std::clamp(value, 0.0, std::numbers::ln2);
}

nlohmann::json DivergenceTable::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) rows_j.push_back({{"resolution", r.resolution.str()}, {"kl", r.kl}, {"js", r.js}});
  return {{"rows", rows_j}, {"argmin_kl", argmin_kl.str()}, {"argmin_js", argmin_js.str()}};
}

DivergenceTable divergence_sweep(const std::vector<LatentStats>& teacher_stats, const std::vector<LatentStats>& student_stats) {
  if (teacher_stats.size() != student_stats.size() || teacher_stats.empty()) {
    throw ContractError("divergence_sweep: resolution grids differ");
  }
  DivergenceTable table;
  for (std::size_t i = 0; i < teacher_stats.size(); ++i) {
    if (teacher_stats[i].resolution != student_stats[i].resolution) {
      throw ContractError(fmt::format("divergence_sweep: grid mismatch at {} vs {}", teacher_stats[i].resolution.str(),
                                      student_stats[i].resolution.str()));
    }
    const GaussianSummary t{teacher_stats[i].mean, teacher_stats[i].std};
    const GaussianSummary s{student_stats[i].mean, student_stats[i].std};
    table.rows.push_back({teacher_stats[i].resolution, gaussian_kl(t, s), gaussian_js(t, s)});
  }
  auto argmin = [&](auto field) {
    const DivergenceRow* best = nullptr;
    for (const auto& r : table.rows) {
      if (!best || field(r) < field(*best) || (field(r) == field(*best) && r.resolution < best->resolution)) best = &r;
    }
    return best->resolution;
  };
  table.argmin_kl = argmin([](const DivergenceRow& r) { return r.kl; });
  table.argmin_js = argmin([](const DivergenceRow& r) { return r.js; });
  return table;
}

std::vector<LatentBatch> interpolate_latents(const LatentBatch& z1, const LatentBatch& z2, const std::vector<double>& alphas) {
  if (z1.data().shape() != z2.data().shape()) throw ContractError("interpolate_latents: shape mismatch");
  std::vector<LatentBatch> out;
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ContractError(fmt::format("alpha {} outside [0, 1]", a));
    Tensor t(z1.data().shape());
    const float* p = z1.data().data();
    const float* q = z2.data().data();
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>((1.0 - a) * p[i] + a * q[i]);
    out.emplace_back(std::move(t), LatentSource::kDerived);
  }
  return out;
}

std::vector<ContinuityStep> continuity_report(const DecodeFn& decode, const std::vector<LatentBatch>& path,
                                              const ImageBatch& reference) {
  const ImageBatch ref = convert_range(reference, ValueRange::kUnit);
  std::vector<ContinuityStep> out;
  std::optional<ImageBatch> prev;
  for (std::size_t i = 0; i < path.size(); ++i) {
    ContinuityStep step;
    step.index = static_cast<int>(i);
    try {
      const ImageBatch img = convert_range(decode(path[i]), ValueRange::kUnit);
      if (prev && prev->data().shape() == img.data().shape()) step.adjacent_mse = mean_std(mse(img, *prev)).first;
      if (ref.data().shape() == img.data().shape()) step.reference_mse = mean_std(mse(img, ref)).first;
      prev = img;
    } catch (const std::exception& e) {
      step.ok = false;
      step.error = e.what();
      prev.reset();
    }
    out.push_back(std::move(step));
  }
  return out;
}

void register_reducer(const std::string& id, Reducer reducer) {
  std::lock_guard lock(reducers().mu);
  reducers().reducers[id] = std::move(reducer);
}

std::optional<Reducer> find_reducer(const std::string& id) {
  if (id.empty() || id == "none") return std::nullopt;
  std::lock_guard lock(reducers().mu);
  auto it = reducers().reducers.find(id);
  if (it == reducers().reducers.end()) return std::nullopt;
  return it->second;
}

EmbeddingExport export_embeddings(const std::map<std::string, std::map<Resolution, LatentBatch>>& latents,
                                  const std::string& reducer_id, const fs::path& csv_path) {
  EmbeddingExport ex;
  int n_images = -1;
  bool first = true;
  for (const auto& [model, by_res] : latents) {
    for (const auto& [res, z] : by_res) {
      if (n_images >= 0 && z.size() != n_images) {
        throw ContractError(fmt::format("export_embeddings: {} at {} has {} images, expected {}", model, res.str(), z.size(), n_images));
      }
      n_images = z.size();
      const Grid g = z.grid();
      if (first || g.h * g.w < ex.common_grid.h * ex.common_grid.w) ex.common_grid = g;
      first = false;
    }
  }
  if (n_images < 0) throw ContractError("export_embeddings: nothing to export");

  struct Row {
    std::string model;
    Resolution res;
    int image;
  };
  std::vector<Row> labels;
  const int dim = kLatentChannels * ex.common_grid.h * ex.common_grid.w;
  Eigen::MatrixXd flat;
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& [model, by_res] : latents) {
    for (const auto& [res, z] : by_res) {
      const Tensor& t = z.data();
      const Tensor small = resize_tensor(t, ex.common_grid.h, ex.common_grid.w, ResizeMethod::kBilinear, true);
      double radial = 0.0;
      for (int n = 0; n < t.n(); ++n) {
        double sq = 0.0;
        const float* p = t.image(n);
        for (std::size_t i = 0; i < t.shape().image_size(); ++i) sq += static_cast<double>(p[i]) * p[i];
        radial += std::sqrt(sq / static_cast<double>(t.shape().image_size()));
        Eigen::RowVectorXd r(dim);
        const float* s = small.image(n);
        for (int i = 0; i < dim; ++i) r(i) = s[i];
        rows.push_back(std::move(r));
        labels.push_back({model, res, n});
      }
      ex.radial[model][res] = radial / t.n();
    }
  }
  flat.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) flat.row(static_cast<Eigen::Index>(i)) = rows[i];
  ex.rows = rows.size();

  std::optional<Eigen::MatrixXd> coords;
  if (auto reducer = find_reducer(reducer_id)) {
    coords = (*reducer)(flat);
    ex.reduced = true;
  }

  std::string csv = "model_id,resolution,image_id";
  if (coords) csv += ",x,y";
  for (int i = 0; i < dim; ++i) csv += fmt::format(",v{}", i);
  csv += "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    csv += fmt::format("{},{},{}", labels[i].model, labels[i].res.str(), labels[i].image);
    if (coords) csv += fmt::format(",{:.6g},{:.6g}", (*coords)(i, 0), (*coords)(i, 1));
    for (int d = 0; d < dim; ++d) csv += fmt::format(",{:.6g}", flat(static_cast<Eigen::Index>(i), d));
    csv += "\n";
  }
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  write_text_atomic(csv_path, csv);
  return ex;
}

}  // namespace rdist
