#include "rdist/student/student_encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "rdist/core/hash.hpp"
#include "rdist/core/rng.hpp"

namespace rdist {
namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }
std::size_t norm_params(NormKind kind, std::size_t c) { return kind == NormKind::kNone ? 0 : 2 * c; }

int stage_out_width(const StudentConfig& cfg, int s, int width) {
  const bool last = s == cfg.stages - 1;
  return (last && !cfg.double_last_stage) ? width : width * 2;
}

}  // namespace

StudentEncoder::StudentEncoder(const StudentConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  Rng rng = make_rng(seed, "student_init");
  stem_ = nn::Conv2d("stem", cfg_.in_channels, cfg_.hidden, 1, 1, 0, rng);
  int width = cfg_.hidden;
  for (int s = 0; s < cfg_.stages; ++s) {
    Stage st;
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      st.blocks.emplace_back(fmt::format("stage{}.block{}", s, b), width, cfg_.convs_per_block, cfg_.norm, rng);
    }
    const int out = stage_out_width(cfg_, s, width);
    st.down = nn::Conv2d(fmt::format("stage{}.down", s), width, out, 3, 2, 1, rng);
    stages_.push_back(std::move(st));
    width = out;
  }
  head_ = nn::Conv2d("head", width, cfg_.latent_channels, 1, 1, 0, rng);
  std::fill(head_.bias().value.begin(), head_.bias().value.end(), 0.0f);
}

StudentEncoder build_student(const StudentConfig& cfg, std::uint64_t seed) { return StudentEncoder(cfg, seed); }

void StudentEncoder::check_input(const Tensor& x) const {
  if (x.c() != cfg_.in_channels) {
    throw ContractError(fmt::format("student expects {} input channels, got {}", cfg_.in_channels, x.c()));
  }
  const int f = downsample_factor();
  if (x.h() % f != 0 || x.w() % f != 0) {
    throw ContractError(fmt::format("student input {}x{} is not divisible by {}", x.h(), x.w(), f));
  }
}

Tensor StudentEncoder::forward_raw(const Tensor& x) const {
  check_input(x);
  Tensor h = stem_.forward(x);
  for (const auto& st : stages_) {
    for (const auto& b : st.blocks) h = b.forward(h);
    h = st.down.forward(h);
  }
  return head_.forward(h);
}

LatentBatch StudentEncoder::forward(const ImageBatch& x) const {
  x.require_range(ValueRange::kSymmetric);
  if (cfg_.latent_channels != kLatentChannels) {
    throw ContractError(fmt::format("student latent width {} != {}", cfg_.latent_channels, kLatentChannels));
  }
  Tensor z = forward_raw(x.data());
  if (!z.all_finite()) {
    std::string where = x.data().all_finite() ? "input is finite" : "input already contains non-finite values";
    Tensor h = stem_.forward(x.data());
    if (!h.all_finite()) where += "; first non-finite after stem";
    for (std::size_t s = 0; s < stages_.size() && h.all_finite(); ++s) {
      for (const auto& b : stages_[s].blocks) h = b.forward(h);
      h = stages_[s].down.forward(h);
      if (!h.all_finite()) where += fmt::format("; first non-finite after stage {}", s);
    }
    throw ContractError("student forward produced non-finite latents (" + where + ")");
  }
  return LatentBatch(std::move(z), LatentSource::kStudent);
}

Tensor StudentEncoder::forward_train(const Tensor& x) {
  check_input(x);
  Tensor h = stem_.forward_train(x);
  for (auto& st : stages_) {
    for (auto& b : st.blocks) h = b.forward_train(h);
    h = st.down.forward_train(h);
  }
  return head_.forward_train(h);
}

Tensor StudentEncoder::backward(const Tensor& grad_out) {
  Tensor g = head_.backward(grad_out);
  for (auto st = stages_.rbegin(); st != stages_.rend(); ++st) {
    g = st->down.backward(g);
    for (auto b = st->blocks.rbegin(); b != st->blocks.rend(); ++b) g = b->backward(g);
  }
  return stem_.backward(g);
}

void StudentEncoder::visit(const nn::ParamVisitor& f) {
  stem_.visit(f);
  for (auto& st : stages_) {
    for (auto& b : st.blocks) b.visit(f);
    st.down.visit(f);
  }
  head_.visit(f);
}

void StudentEncoder::visit(const nn::ConstParamVisitor& f) const {
  stem_.visit(f);
  for (const auto& st : stages_) {
    for (const auto& b : st.blocks) b.visit(f);
    st.down.visit(f);
  }
  head_.visit(f);
}

std::vector<nn::Param*> StudentEncoder::parameters() {
  std::vector<nn::Param*> out;
  visit(nn::ParamVisitor([&out](nn::Param& p) { out.push_back(&p); }));
  return out;
}

void StudentEncoder::zero_grad() {
  visit(nn::ParamVisitor([](nn::Param& p) { p.zero_grad(); }));
}

std::size_t StudentEncoder::parameter_count() const {
  std::size_t n = 0;
  visit(nn::ConstParamVisitor([&n](const nn::Param& p) { n += p.size(); }));
  return n;
}

std::string StudentEncoder::parameter_hash() const {
  Sha256 h;
  visit(nn::ConstParamVisitor([&h](const nn::Param& p) { h.update(p.name).update(std::span<const float>(p.value)); }));
  return h.hex();
}

std::vector<nn::Norm*> StudentEncoder::norms() {
  std::vector<nn::Norm*> out;
  for (auto& st : stages_) {
    for (auto& b : st.blocks) {
      for (auto& n : b.norms()) out.push_back(&n);
    }
  }
  return out;
}

void StudentEncoder::save_to(Archive& ar) const {
  visit(nn::ConstParamVisitor([&ar](const nn::Param& p) { ar.put(p.name, p.dims, p.value); }));
  if (cfg_.norm == NormKind::kBatch) {
    auto ns = const_cast<StudentEncoder*>(this)->norms();
    for (std::size_t i = 0; i < ns.size(); ++i) {
      ar.put(fmt::format("buffer.norm{}.running_mean", i), {static_cast<int>(ns[i]->running_mean().size())}, ns[i]->running_mean());
      ar.put(fmt::format("buffer.norm{}.running_var", i), {static_cast<int>(ns[i]->running_var().size())}, ns[i]->running_var());
    }
  }
}

void StudentEncoder::load_from(const Archive& ar) {
  visit(nn::ParamVisitor([&ar](nn::Param& p) {
    const NamedArray& a = ar.get(p.name);
    if (a.values.size() != p.size()) throw std::runtime_error("checkpoint tensor size mismatch for " + p.name);
    p.value = a.values;
  }));
  if (cfg_.norm == NormKind::kBatch) {
    auto ns = norms();
    for (std::size_t i = 0; i < ns.size(); ++i) {
      ns[i]->running_mean() = ar.get(fmt::format("buffer.norm{}.running_mean", i)).values;
      ns[i]->running_var() = ar.get(fmt::format("buffer.norm{}.running_var", i)).values;
    }
  }
}

std::size_t count_parameters(const StudentConfig& cfg) {
  cfg.validate();
  std::size_t total = conv_params(cfg.in_channels, cfg.hidden, 1);
  std::size_t width = cfg.hidden;
  for (int s = 0; s < cfg.stages; ++s) {
    const std::size_t per_conv = norm_params(cfg.norm, width) + conv_params(width, width, 3);
    total += static_cast<std::size_t>(cfg.blocks_per_stage) * cfg.convs_per_block * per_conv;
    const std::size_t out = stage_out_width(cfg, s, static_cast<int>(width));
    total += conv_params(width, out, 3);
    width = out;
  }
  total += conv_params(width, cfg.latent_channels, 1);
  return total;
}

ParameterFootprint parameter_footprint(std::size_t count) { return {count, count * 4, count * 2}; }

void save_student(const std::filesystem::path& path, const StudentEncoder& student, const nlohmann::json& extra,
                  const nn::Adam* optimizer) {
  Archive ar;
  ar.header = extra;
  ar.header["version"] = kCheckpointVersion;
  ar.header["kind"] = "student";
  ar.header["config"] = to_json(student.config());
  ar.header["seed"] = student.seed();
  student.save_to(ar);
  if (optimizer) optimizer->save(ar);
  write_archive(path, ar);
}

LoadedStudent load_student(const std::filesystem::path& path) {
  Archive ar = read_archive(path);
  if (ar.header.value("kind", "") != "student") throw std::runtime_error(path.string() + " is not a student checkpoint");
  if (ar.header.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error(fmt::format("unsupported checkpoint version {}", ar.header.at("version").dump()));
  }
  StudentEncoder s(student_config_from_json(ar.header.at("config")), ar.header.at("seed").get<std::uint64_t>());
  s.load_from(ar);
  nlohmann::json header = ar.header;
  return LoadedStudent{std::move(s), std::move(header), std::move(ar)};
}

}  // namespace rdist
