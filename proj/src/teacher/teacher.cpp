#include "rdist/teacher/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "rdist/core/archive.hpp"
#include "rdist/core/hash.hpp"
#include "rdist/nn/layers.hpp"
#include "rdist/teacher/autoencoder.hpp"

namespace rdist {

GaussianLatent::GaussianLatent(Tensor m, Tensor s) : mean(std::move(m)), std(std::move(s)) {
  if (mean.shape() != std.shape()) throw ContractError("gaussian mean/std shape mismatch");
  for (float v : std.values()) {
    if (!(v > 0.0f)) throw ContractError("gaussian std must be > 0 elementwise");
  }
}

GaussianLatent split_gaussian(const Tensor& raw, StdParameterization param) {
  if (raw.c() != 2 * kLatentChannels) {
    throw ContractError(fmt::format("split_gaussian expects {} channels, got {}", 2 * kLatentChannels, raw.c()));
  }
  Tensor mean = raw.slice_channels(0, kLatentChannels);
  Tensor spread = raw.slice_channels(kLatentChannels, 2 * kLatentChannels);
  for (float& v : spread.values()) {
    if (param == StdParameterization::kLogVariance) {
      v = std::exp(0.5f * std::clamp(v, -30.0f, 20.0f));
    } else {
      v = std::max(v, 1e-12f);
    }
  }
  return GaussianLatent(std::move(mean), std::move(spread));
}

LatentBatch sample_latent(const GaussianLatent& g, Rng& rng) {
  if (!g.mean.all_finite() || !g.std.all_finite()) throw ContractError("sample_latent: non-finite gaussian parameters");
  Tensor z(g.mean.shape());
  const float* m = g.mean.data();
  const float* s = g.std.data();
  float* out = z.data();
  for (std::size_t i = 0; i < z.numel(); ++i) out[i] = m[i] + s[i] * rng.normal();
  return LatentBatch(std::move(z), LatentSource::kTeacherSampled);
}

LatentBatch mean_latent(const GaussianLatent& g) { return LatentBatch(g.mean, LatentSource::kTeacherMean); }

Tensor TeacherBundle::decode_vjp(const LatentBatch&, const Tensor&) const {
  throw ContractError("teacher '" + name() + "' does not expose decoder gradients");
}

void check_teacher_contract(const TeacherBundle& teacher, const Resolution& probe) {
  ImageBatch zeros(Tensor(Shape{1, 3, probe.height, probe.width}), ValueRange::kSymmetric);
  const GaussianLatent g = teacher.encode(zeros);
  const Grid expect = probe.latent_grid();
  if (g.mean.c() != kLatentChannels) {
    throw ContractError(fmt::format("teacher '{}' yields {} latent channels, expected {}", teacher.name(), g.mean.c(),
                                    kLatentChannels));
  }
  if (g.mean.h() != expect.h || g.mean.w() != expect.w) {
    throw ContractError(fmt::format("teacher '{}' maps {} to a {}x{} grid; downsample factor must be {}", teacher.name(),
                                    probe.str(), g.mean.h(), g.mean.w(), kDownsampleFactor));
  }
  const ImageBatch rec = teacher.decode(mean_latent(g));
  if (rec.resolution() != probe || rec.channels() != 3) {
    throw ContractError(fmt::format("teacher '{}' decodes to {}x{}x{}, expected 3x{}", teacher.name(), rec.channels(),
                                    rec.resolution().height, rec.resolution().width, probe.str()));
  }
}

ResolutionBias resolution_bias_from_string(std::string_view s) {
  if (s == "none") return ResolutionBias::kNone;
  if (s == "highres_sweet") return ResolutionBias::kHighresSweet;
  throw ContractError(fmt::format("unknown resolution bias '{}'", s));
}

std::string_view to_string(ResolutionBias b) { return b == ResolutionBias::kNone ? "none" : "highres_sweet"; }

namespace {

constexpr int kPatch = kDownsampleFactor;
constexpr int kPatchDim = 3 * kPatch * kPatch;
constexpr float kProjScale = 0.25f;
constexpr float kAcWeight = 0.5f;
constexpr float kLogVarBase = -7.0131f;  // log(0.03^2)
constexpr float kLogVarSwing = 0.6f;

double dct(int u, int x) {
  const double alpha = u == 0 ? std::sqrt(1.0 / kPatch) : std::sqrt(2.0 / kPatch);
  return alpha * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * kPatch));
}

// Rows 0..2 are per-color DC, the rest low-frequency color and luminance cosines.
Eigen::MatrixXd cosine_basis() {
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(kLatentChannels, kPatchDim);
  int row = 0;
  const int color_freqs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (const auto& f : color_freqs) {
    for (int c = 0; c < 3; ++c, ++row) {
      for (int y = 0; y < kPatch; ++y) {
        for (int x = 0; x < kPatch; ++x) basis(row, c * 64 + y * kPatch + x) = dct(f[0], x) * dct(f[1], y);
      }
    }
  }
  const int luma_freqs[4][2] = {{2, 0}, {0, 2}, {2, 1}, {1, 2}};
  for (const auto& f : luma_freqs) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < kPatch; ++y) {
        for (int x = 0; x < kPatch; ++x) basis(row, c * 64 + y * kPatch + x) = dct(f[0], x) * dct(f[1], y) / std::sqrt(3.0);
      }
    }
    ++row;
  }
  return basis;
}

class ToyTeacher final : public TeacherBundle {
 public:
  ToyTeacher(std::uint64_t seed, ResolutionBias bias)
      : seed_(seed), bias_(bias), decoder_("decoder.weight", {kPatchDim, kLatentChannels}) {
    Eigen::MatrixXd basis = cosine_basis();
    basis.bottomRows(kLatentChannels - 3) *= kAcWeight;
    Rng rng = make_rng(seed, "toy_teacher");
    Eigen::MatrixXd gauss(kLatentChannels, kLatentChannels);
    for (int i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
    const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    const Eigen::MatrixXd proj = kProjScale * rotation * basis;
    // Rows of proj are orthogonal, so the pseudo-inverse is proj^T (proj proj^T)^-1.
    const Eigen::MatrixXd pinv = proj.transpose() * (proj * proj.transpose()).inverse();

    Rng conv_rng = make_rng(seed, "toy_teacher_conv");
    proj_ = nn::Conv2d("encoder.proj", 3, kLatentChannels, kPatch, kPatch, 0, conv_rng);
    for (int o = 0; o < kLatentChannels; ++o) {
      for (int i = 0; i < kPatchDim; ++i) proj_.weight().value[o * kPatchDim + i] = static_cast<float>(proj(o, i));
    }
    std::fill(proj_.bias().value.begin(), proj_.bias().value.end(), 0.0f);
    for (int i = 0; i < kPatchDim; ++i) {
      for (int k = 0; k < kLatentChannels; ++k) decoder_.value[i * kLatentChannels + k] = static_cast<float>(pinv(i, k));
    }

    logvar_ = nn::Conv2d("encoder.logvar", kLatentChannels, kLatentChannels, 1, 1, 0, conv_rng);
    for (float& v : logvar_.weight().value) v = 0.25f * rng.normal();
    for (float& v : logvar_.bias().value) v = 0.1f * rng.normal();
  }

  ToyTeacher(std::uint64_t seed, ResolutionBias bias, const Archive& ar) : ToyTeacher(seed, bias) {
    visit([&ar](nn::Param& p) { p.value = ar.get(p.name).values; });
  }

  std::string name() const override { return fmt::format("toy-teacher[{}]", to_string(bias_)); }

  GaussianLatent encode(const ImageBatch& x) const override {
    x.require_range(ValueRange::kSymmetric);
    x.resolution().require_divisible(kDownsampleFactor);
    Tensor mean = proj_.forward(x.data());
    Tensor lv = logvar_.forward(mean);
    const Resolution r = x.resolution();
    // std gain (sqrt(H*W)/32)^0.5 is a log-variance shift of log(sqrt(H*W)/32).
    const float res_shift = bias_ == ResolutionBias::kHighresSweet
                                ? static_cast<float>(std::log(std::sqrt(static_cast<double>(r.height) * r.width) / 32.0))
                                : 0.0f;
    for (float& v : lv.values()) v = kLogVarBase + kLogVarSwing * std::tanh(v) + res_shift;
    return split_gaussian(Tensor::concat_channels(mean, lv), StdParameterization::kLogVariance);
  }

  ImageBatch decode(const LatentBatch& z) const override {
    Tensor img = decode_linear(z.data());
    for (float& v : img.values()) v = std::clamp(v, -1.0f, 1.0f);
    return ImageBatch(std::move(img), ValueRange::kSymmetric);
  }

  bool supports_decode_vjp() const override { return true; }

  Tensor decode_vjp(const LatentBatch& z, const Tensor& grad_image) const override {
    const Tensor raw = decode_linear(z.data());
    if (raw.shape() != grad_image.shape()) throw ContractError("decode_vjp gradient shape mismatch");
    const Tensor& zt = z.data();
    Tensor out(zt.shape());
    const auto& d = decoder_.value;
    std::vector<float> patch(kPatchDim);
    for (int n = 0; n < zt.n(); ++n) {
      for (int cy = 0; cy < zt.h(); ++cy) {
        for (int cx = 0; cx < zt.w(); ++cx) {
          for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < kPatch; ++y) {
              for (int x = 0; x < kPatch; ++x) {
                const int iy = cy * kPatch + y, ix = cx * kPatch + x;
                const float v = raw.at(n, c, iy, ix);
                patch[c * 64 + y * kPatch + x] = (v < -1.0f || v > 1.0f) ? 0.0f : grad_image.at(n, c, iy, ix);
              }
            }
          }
          for (int k = 0; k < kLatentChannels; ++k) {
            float acc = 0.0f;
            for (int i = 0; i < kPatchDim; ++i) acc += d[i * kLatentChannels + k] * patch[i];
            out.at(n, k, cy, cx) = acc;
          }
        }
      }
    }
    return out;
  }

  std::size_t parameter_count() const override {
    std::size_t n = 0;
    visit([&n](const nn::Param& p) { n += p.size(); });
    return n;
  }

  std::string parameter_hash() const override {
    Sha256 h;
    visit([&h](const nn::Param& p) { h.update(p.name).update(std::span<const float>(p.value)); });
    return h.hex();
  }

  void save(const std::filesystem::path& path) const {
    Archive ar;
    ar.header = {{"version", 1}, {"kind", "toy-teacher"}, {"seed", seed_}, {"resolution_bias", to_string(bias_)}};
    visit([&ar](const nn::Param& p) { ar.put(p.name, p.dims, p.value); });
    write_archive(path, ar);
  }

 private:
  void visit(const nn::ConstParamVisitor& f) const {
    proj_.visit(f);
    logvar_.visit(f);
    f(decoder_);
  }
  void visit(const nn::ParamVisitor& f) {
    proj_.visit(f);
    logvar_.visit(f);
    f(decoder_);
  }

  Tensor decode_linear(const Tensor& z) const {
    if (z.c() != kLatentChannels) throw ContractError("toy decoder expects 16 latent channels");
    Tensor img(Shape{z.n(), 3, z.h() * kPatch, z.w() * kPatch});
    const auto& d = decoder_.value;
    std::vector<float> code(kLatentChannels);
    for (int n = 0; n < z.n(); ++n) {
      for (int cy = 0; cy < z.h(); ++cy) {
        for (int cx = 0; cx < z.w(); ++cx) {
          for (int k = 0; k < kLatentChannels; ++k) code[k] = z.at(n, k, cy, cx);
          for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < kPatch; ++y) {
              for (int x = 0; x < kPatch; ++x) {
                const float* row = d.data() + static_cast<std::size_t>(c * 64 + y * kPatch + x) * kLatentChannels;
                float acc = 0.0f;
                for (int k = 0; k < kLatentChannels; ++k) acc += row[k] * code[k];
                img.at(n, c, cy * kPatch + y, cx * kPatch + x) = acc;
              }
            }
          }
        }
      }
    }
    return img;
  }

  std::uint64_t seed_;
  ResolutionBias bias_;
  nn::Conv2d proj_;
  nn::Conv2d logvar_;
  nn::Param decoder_;
};

TeacherPtr load_toy_teacher(const std::filesystem::path& path) {
  const Archive ar = read_archive(path);
  if (ar.header.value("kind", "") != "toy-teacher") throw std::runtime_error(path.string() + " is not a toy-teacher archive");
  return std::make_shared<ToyTeacher>(ar.header.at("seed").get<std::uint64_t>(),
                                      resolution_bias_from_string(ar.header.at("resolution_bias").get<std::string>()), ar);
}

TeacherPtr load_scratch_vae(const std::filesystem::path& path) { return AutoencoderModel::load(path); }

struct Registry {
  std::mutex mu;
  std::map<std::string, AdapterFactory> factories{{"toy-teacher", load_toy_teacher}, {"scratch-vae", load_scratch_vae}};
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

TeacherPtr make_toy_teacher(std::uint64_t seed, ResolutionBias bias) { return std::make_shared<ToyTeacher>(seed, bias); }

void save_toy_teacher(const std::filesystem::path& path, std::uint64_t seed, ResolutionBias bias) {
  ToyTeacher(seed, bias).save(path);
}

void register_adapter(const std::string& id, AdapterFactory factory) {
  std::lock_guard lock(registry().mu);
  registry().factories[id] = std::move(factory);
}

std::vector<std::string> registered_adapters() {
  std::lock_guard lock(registry().mu);
  std::vector<std::string> ids;
  for (const auto& [id, f] : registry().factories) ids.push_back(id);
  return ids;
}

TeacherPtr load_external_teacher(const std::filesystem::path& artifact_path, const std::string& adapter_id) {
  AdapterFactory factory;
  {
    std::lock_guard lock(registry().mu);
    auto it = registry().factories.find(adapter_id);
    if (it == registry().factories.end()) {
      std::string known;
      for (const auto& [id, f] : registry().factories) known += (known.empty() ? "" : ", ") + id;
      throw ContractError(fmt::format("unknown teacher adapter '{}' (known: {})", adapter_id, known));
    }
    factory = it->second;
  }
  if (!std::filesystem::exists(artifact_path)) {
    throw std::runtime_error("teacher weights not found: " + artifact_path.string());
  }
  TeacherPtr teacher = factory(artifact_path);
  check_teacher_contract(*teacher);
  return teacher;
}

}  // namespace rdist
