#include "rdist/teacher/autoencoder.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rdist/core/hash.hpp"

namespace rdist {

StudentConfig AutoencoderShape::encoder_config() const {
  StudentConfig cfg;
  cfg.hidden = hidden;
  cfg.stages = stages;
  cfg.blocks_per_stage = blocks_per_stage;
  cfg.convs_per_block = 2;
  cfg.latent_channels = 2 * kLatentChannels;
  cfg.norm = norm;
  cfg.double_last_stage = true;
  return cfg;
}

ConvDecoder::ConvDecoder(const AutoencoderShape& shape, std::uint64_t seed) {
  Rng rng = make_rng(seed, "decoder_init");
  int width = shape.top_width();
  conv_in_ = nn::Conv2d("decoder.conv_in", kLatentChannels, width, 1, 1, 0, rng);
  for (int s = 0; s < shape.stages; ++s) {
    Stage st;
    for (int b = 0; b < shape.blocks_per_stage; ++b) {
      st.blocks.emplace_back(fmt::format("decoder.stage{}.block{}", s, b), width, 2, shape.norm, rng);
    }
    st.up = nn::Conv2d(fmt::format("decoder.stage{}.up", s), width, width / 2, 3, 1, 1, rng);
    stages_.push_back(std::move(st));
    width /= 2;
  }
  norm_out_ = nn::Norm("decoder.norm_out", shape.norm, width);
  conv_out_ = nn::Conv2d("decoder.conv_out", width, 3, 1, 1, 0, rng);
}

Tensor ConvDecoder::forward(const Tensor& z) const {
  Tensor h = conv_in_.forward(z);
  for (const auto& st : stages_) {
    for (const auto& b : st.blocks) h = b.forward(h);
    h = st.up.forward(nn::upsample_nearest2x(h));
  }
  return conv_out_.forward(nn::silu(norm_out_.forward(h)));
}

Tensor ConvDecoder::forward_train(const Tensor& z) {
  Tensor h = conv_in_.forward_train(z);
  for (auto& st : stages_) {
    for (auto& b : st.blocks) h = b.forward_train(h);
    h = st.up.forward_train(nn::upsample_nearest2x(h));
  }
  pre_act_ = norm_out_.forward_train(h);
  return conv_out_.forward_train(nn::silu(pre_act_));
}

Tensor ConvDecoder::backward(const Tensor& grad_out) {
  Tensor g = conv_out_.backward(grad_out);
  g = norm_out_.backward(nn::silu_backward(pre_act_, g));
  for (auto st = stages_.rbegin(); st != stages_.rend(); ++st) {
    g = nn::upsample_nearest2x_backward(st->up.backward(g));
    for (auto b = st->blocks.rbegin(); b != st->blocks.rend(); ++b) g = b->backward(g);
  }
  return conv_in_.backward(g);
}

void ConvDecoder::visit(const nn::ParamVisitor& f) {
  conv_in_.visit(f);
  for (auto& st : stages_) {
    for (auto& b : st.blocks) b.visit(f);
    st.up.visit(f);
  }
  norm_out_.visit(f);
  conv_out_.visit(f);
}

void ConvDecoder::visit(const nn::ConstParamVisitor& f) const {
  conv_in_.visit(f);
  for (const auto& st : stages_) {
    for (const auto& b : st.blocks) b.visit(f);
    st.up.visit(f);
  }
  norm_out_.visit(f);
  conv_out_.visit(f);
}

AutoencoderModel::AutoencoderModel(const AutoencoderShape& shape, std::uint64_t seed, std::string name)
    : shape_(shape),
      seed_(seed),
      name_(std::move(name)),
      encoder_(shape.encoder_config(), seed),
      decoder_(shape, seed) {}

GaussianLatent AutoencoderModel::encode(const ImageBatch& x) const {
  x.require_range(ValueRange::kSymmetric);
  x.resolution().require_divisible(kDownsampleFactor);
  return split_gaussian(encoder_.forward_raw(x.data()), StdParameterization::kLogVariance);
}

ImageBatch AutoencoderModel::decode(const LatentBatch& z) const {
  Tensor img = decoder_.forward(z.data());
  for (float& v : img.values()) v = std::clamp(v, -1.0f, 1.0f);
  return ImageBatch(std::move(img), ValueRange::kSymmetric);
}

Tensor AutoencoderModel::decode_vjp(const LatentBatch& z, const Tensor& grad_image) const {
  ConvDecoder scratch = decoder_;
  const Tensor raw = scratch.forward_train(z.data());
  if (raw.shape() != grad_image.shape()) throw ContractError("decode_vjp gradient shape mismatch");
  Tensor g = grad_image;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (raw.data()[i] < -1.0f || raw.data()[i] > 1.0f) g.data()[i] = 0.0f;
  }
  return scratch.backward(g);
}

std::size_t AutoencoderModel::parameter_count() const {
  std::size_t n = encoder_.parameter_count();
  decoder_.visit(nn::ConstParamVisitor([&n](const nn::Param& p) { n += p.size(); }));
  return n;
}

std::string AutoencoderModel::parameter_hash() const {
  Sha256 h;
  h.update(encoder_.parameter_hash());
  decoder_.visit(nn::ConstParamVisitor([&h](const nn::Param& p) { h.update(p.name).update(std::span<const float>(p.value)); }));
  return h.hex();
}

std::vector<nn::Param*> AutoencoderModel::parameters() {
  std::vector<nn::Param*> out = encoder_.parameters();
  decoder_.visit(nn::ParamVisitor([&out](nn::Param& p) { out.push_back(&p); }));
  return out;
}

void AutoencoderModel::zero_grad() {
  for (nn::Param* p : parameters()) p->zero_grad();
}

void AutoencoderModel::save(const std::filesystem::path& path, const nlohmann::json& extra, const nn::Adam* optimizer) const {
  Archive ar;
  ar.header = extra;
  ar.header["version"] = 1;
  ar.header["kind"] = "scratch-vae";
  ar.header["name"] = name_;
  ar.header["seed"] = seed_;
  ar.header["shape"] = {{"hidden", shape_.hidden},
                        {"stages", shape_.stages},
                        {"blocks_per_stage", shape_.blocks_per_stage},
                        {"norm", to_string(shape_.norm)}};
  encoder_.save_to(ar);
  decoder_.visit(nn::ConstParamVisitor([&ar](const nn::Param& p) { ar.put(p.name, p.dims, p.value); }));
  if (optimizer) optimizer->save(ar);
  write_archive(path, ar);
}

std::shared_ptr<AutoencoderModel> AutoencoderModel::load(const std::filesystem::path& path) {
  const Archive ar = read_archive(path);
  if (ar.header.value("kind", "") != "scratch-vae") throw std::runtime_error(path.string() + " is not a scratch-vae archive");
  const auto& js = ar.header.at("shape");
  AutoencoderShape shape;
  shape.hidden = js.at("hidden").get<int>();
  shape.stages = js.at("stages").get<int>();
  shape.blocks_per_stage = js.at("blocks_per_stage").get<int>();
  shape.norm = norm_kind_from_string(js.at("norm").get<std::string>());
  auto model = std::make_shared<AutoencoderModel>(shape, ar.header.at("seed").get<std::uint64_t>(),
                                                  ar.header.value("name", std::string("scratch-vae")));
  model->encoder_.load_from(ar);
  model->decoder_.visit(nn::ParamVisitor([&ar](nn::Param& p) { p.value = ar.get(p.name).values; }));
  return model;
}

}  // namespace rdist
