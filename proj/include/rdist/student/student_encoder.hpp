#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdist/core/archive.hpp"
#include "rdist/core/config.hpp"
#include "rdist/core/types.hpp"
#include "rdist/nn/adam.hpp"
#include "rdist/nn/layers.hpp"

namespace rdist {

/// Compact deterministic encoder: 1x1 stem, `stages` x (residual blocks + stride-2 conv),
/// then a 1x1 head to the latent channels.
class StudentEncoder {
 public:
  StudentEncoder(const StudentConfig& cfg, std::uint64_t seed);

  const StudentConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int downsample_factor() const { return 1 << cfg_.stages; }

  /// Inference on a [-1,1] batch. Requires latent_channels == 16.
  LatentBatch forward(const ImageBatch& x) const;
  /// Inference on a raw tensor, any latent width.
  Tensor forward_raw(const Tensor& x) const;

  Tensor forward_train(const Tensor& x);
  /// Accumulates parameter gradients; returns d(loss)/d(input).
  Tensor backward(const Tensor& grad_out);

  void visit(const nn::ParamVisitor& f);
  void visit(const nn::ConstParamVisitor& f) const;
  std::vector<nn::Param*> parameters();
  void zero_grad();

  /// Sum of the sizes of all built parameter arrays.
  std::size_t parameter_count() const;
  std::string parameter_hash() const;

  void save_to(Archive& ar) const;
  void load_from(const Archive& ar);

 private:
  struct Stage {
    std::vector<nn::ResBlock> blocks;
    nn::Conv2d down;
  };
  void check_input(const Tensor& x) const;
  std::vector<nn::Norm*> norms();

  StudentConfig cfg_;
  std::uint64_t seed_;
  nn::Conv2d stem_;
  std::vector<Stage> stages_;
  nn::Conv2d head_;
};

StudentEncoder build_student(const StudentConfig& cfg, std::uint64_t seed);

/// Closed-form parameter count (conv kernels + biases + norm affine).
std::size_t count_parameters(const StudentConfig& cfg);

struct ParameterFootprint {
  std::size_t count = 0;
  std::size_t bytes_fp32 = 0;
  std::size_t bytes_fp16 = 0;
};
ParameterFootprint parameter_footprint(std::size_t count);

inline constexpr int kCheckpointVersion = 1;

/// Named-tensor checkpoint with embedded config, seed, and version. `extra` is merged
/// into the header. Optimizer moments are stored when `optimizer` is given.
void save_student(const std::filesystem::path& path, const StudentEncoder& student,
                  const nlohmann::json& extra = nlohmann::json::object(), const nn::Adam* optimizer = nullptr);

struct LoadedStudent {
  StudentEncoder student;
  nlohmann::json header;
  Archive archive;
};
LoadedStudent load_student(const std::filesystem::path& path);

}  // namespace rdist
