#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "rdist/core/archive.hpp"
#include "rdist/nn/layers.hpp"
#include "rdist/student/student_encoder.hpp"
#include "rdist/teacher/teacher.hpp"

namespace rdist {

struct AutoencoderShape {
  int hidden = 16;
  int stages = 3;
  int blocks_per_stage = 2;
  NormKind norm = NormKind::kGroup;

  int top_width() const { return hidden << stages; }
  StudentConfig encoder_config() const;
};

/// Mirror of the student trunk: 1x1 in, per stage residual blocks + nearest 2x upsample +
/// 3x3 conv halving width, then norm/SiLU/1x1 to RGB.
class ConvDecoder {
 public:
  ConvDecoder(const AutoencoderShape& shape, std::uint64_t seed);

  Tensor forward(const Tensor& z) const;
  Tensor forward_train(const Tensor& z);
  Tensor backward(const Tensor& grad_out);

  void visit(const nn::ParamVisitor& f);
  void visit(const nn::ConstParamVisitor& f) const;

 private:
  struct Stage {
    std::vector<nn::ResBlock> blocks;
    nn::Conv2d up;
  };
  nn::Conv2d conv_in_;
  std::vector<Stage> stages_;
  nn::Norm norm_out_;
  nn::Conv2d conv_out_;
  Tensor pre_act_;
};

/// Conventional VAE trained from scratch on reconstruction; satisfies the teacher contract.
class AutoencoderModel final : public TeacherBundle {
 public:
  AutoencoderModel(const AutoencoderShape& shape, std::uint64_t seed, std::string name = "scratch-vae");

  std::string name() const override { return name_; }
  GaussianLatent encode(const ImageBatch& x) const override;
  ImageBatch decode(const LatentBatch& z) const override;
  bool supports_decode_vjp() const override { return true; }
  Tensor decode_vjp(const LatentBatch& z, const Tensor& grad_image) const override;
  std::size_t parameter_count() const override;
  std::string parameter_hash() const override;

  const AutoencoderShape& shape() const { return shape_; }
  StudentEncoder& encoder() { return encoder_; }
  ConvDecoder& decoder() { return decoder_; }
  std::vector<nn::Param*> parameters();
  void zero_grad();

  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object(),
            const nn::Adam* optimizer = nullptr) const;
  static std::shared_ptr<AutoencoderModel> load(const std::filesystem::path& path);

 private:
  AutoencoderShape shape_;
  std::uint64_t seed_;
  std::string name_;
  StudentEncoder encoder_;
  ConvDecoder decoder_;
};

}  // namespace rdist
