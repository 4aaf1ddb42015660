#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rdist/core/rng.hpp"
#include "rdist/core/types.hpp"

namespace rdist {

/// Diagonal Gaussian over latents; std > 0 elementwise.
struct GaussianLatent {
  Tensor mean;
  Tensor std;

  GaussianLatent() = default;
  GaussianLatent(Tensor m, Tensor s);
};

/// How a teacher's second channel half encodes spread.
enum class StdParameterization { kLogVariance, kDirectStd };

/// Splits a 32-channel raw output into mean (channels 0..15) and std (16..31).
/// Log-variance inputs are clamped to [-30, 20] before exp(0.5 * v); direct std is
/// floored at 1e-12.
GaussianLatent split_gaussian(const Tensor& raw, StdParameterization param = StdParameterization::kLogVariance);

/// z = mean + std * eps with eps drawn from `rng`.
LatentBatch sample_latent(const GaussianLatent& g, Rng& rng);
LatentBatch mean_latent(const GaussianLatent& g);

/// Frozen VAE encoder/decoder pair. Images are [-1,1]; latents have 16 channels at 1/8 resolution.
class TeacherBundle {
 public:
  virtual ~TeacherBundle() = default;

  virtual std::string name() const = 0;
  virtual GaussianLatent encode(const ImageBatch& x) const = 0;
  virtual ImageBatch decode(const LatentBatch& z) const = 0;

  /// Vector-Jacobian product of decode at `z` (needed by reconstruction/perceptual losses).
  virtual bool supports_decode_vjp() const { return false; }
  virtual Tensor decode_vjp(const LatentBatch& z, const Tensor& grad_image) const;

  virtual std::size_t parameter_count() const = 0;
  virtual std::string parameter_hash() const = 0;

  int latent_channels() const { return kLatentChannels; }
  int downsample_factor() const { return kDownsampleFactor; }
};

using TeacherPtr = std::shared_ptr<const TeacherBundle>;

/// Encodes/decodes a zeros image at `probe` and checks 16 channels, factor 8, and shape restoration.
void check_teacher_contract(const TeacherBundle& teacher, const Resolution& probe = Resolution::square(64));

enum class ResolutionBias { kNone, kHighresSweet };
ResolutionBias resolution_bias_from_string(std::string_view s);
std::string_view to_string(ResolutionBias b);

/// Desk-scale stand-in teacher: an 8x8 stride-8 patch projection onto a seeded rotation of
/// low-frequency color/luminance cosine bases, with its transpose as decoder. Log-variance
/// comes from a small random head over the mean. With kHighresSweet the std is multiplied
/// by (sqrt(H*W)/32)^0.5, so latent spread grows with input resolution.
TeacherPtr make_toy_teacher(std::uint64_t seed, ResolutionBias bias);

/// Persists a toy teacher so it can be reloaded through the adapter registry.
void save_toy_teacher(const std::filesystem::path& path, std::uint64_t seed, ResolutionBias bias);

using AdapterFactory = std::function<TeacherPtr(const std::filesystem::path&)>;

/// Built-ins: "toy-teacher", "scratch-vae".
void register_adapter(const std::string& id, AdapterFactory factory);
std::vector<std::string> registered_adapters();

/// Resolves `adapter_id`, loads `artifact_path`, and runs check_teacher_contract.
TeacherPtr load_external_teacher(const std::filesystem::path& artifact_path, const std::string& adapter_id);

}  // namespace rdist
