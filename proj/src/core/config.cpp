#include "rdist/core/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>

namespace rdist {

using nlohmann::json;

std::string_view to_string(NormKind k) {
  switch (k) {
    case NormKind::kGroup: return "group";
    case NormKind::kBatch: return "batch";
    case NormKind::kNone: return "none";
  }
  return "none";
}

NormKind norm_kind_from_string(std::string_view s) {
  if (s == "group") return NormKind::kGroup;
  if (s == "batch") return NormKind::kBatch;
  if (s == "none") return NormKind::kNone;
  throw ContractError(fmt::format("unknown norm '{}' (expected group|batch|none)", s));
}

void StudentConfig::validate() const {
  if (in_channels < 1) throw ContractError("student.in_channels must be >= 1");
  if (hidden < 1) throw ContractError("student.hidden must be >= 1");
  if (stages < 1) throw ContractError("student.stages must be >= 1");
  if (blocks_per_stage < 0) throw ContractError("student.blocks_per_stage must be >= 0");
  if (convs_per_block < 1) throw ContractError("student.convs_per_block must be >= 1");
  if (latent_channels < 1) throw ContractError("student.latent_channels must be >= 1");
  // widest layer: hidden * 2^stages; keep 9 * width^2 inside int range
  long long width = hidden;
  for (int s = 0; s < stages; ++s) {
    width *= 2;
    if (width > 16384) throw ContractError(fmt::format("student width hidden*2^stages overflows ({} stages)", stages));
  }
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kL1: return "l1";
    case LossKind::kHuber: return "huber";
    case LossKind::kHuberLpips: return "huber+lpips";
    case LossKind::kHuberLpipsRecon: return "huber+lpips+recon";
    case LossKind::kHuberLpipsKl: return "huber+lpips+kl";
  }
  return "huber";
}

LossKind loss_kind_from_string(std::string_view s) {
  for (auto k : {LossKind::kL1, LossKind::kHuber, LossKind::kHuberLpips, LossKind::kHuberLpipsRecon,
                 LossKind::kHuberLpipsKl}) {
    if (to_string(k) == s) return k;
  }
  throw ContractError(fmt::format("unknown loss kind '{}'", s));
}

double LossSpec::weight(const std::string& term) const {
  auto it = term_weights.find(term);
  return it == term_weights.end() ? 1.0 : it->second;
}

void LossSpec::validate() const {
  if (!(beta > 0.0)) throw ContractError("loss.beta must be > 0");
  for (const auto& [k, w] : term_weights) {
    if (!(w >= 0.0)) throw ContractError("loss.term_weights." + k + " must be >= 0");
  }
}

namespace {

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError(child(k), "unknown field");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(child(key), e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json stage_to_json(const TrainStage& s) {
  return {{"resolution", s.resolution}, {"steps", s.steps}, {"batch_size", s.batch_size}, {"lr", s.lr},
          {"optimizer", s.optimizer}};
}

TrainStage stage_from_json(const json& j, const std::string& path) {
  TrainStage s;
  {
    Fields f(j, path);
    f.read("resolution", s.resolution);
    f.read("steps", s.steps);
    f.read("batch_size", s.batch_size);
    f.read("lr", s.lr);
    f.read("optimizer", s.optimizer);
  }
  if (s.resolution < 8) throw ConfigError(path + ".resolution", "must be >= 8");
  if (s.steps < 0) throw ConfigError(path + ".steps", "must be >= 0");
  if (s.batch_size < 1) throw ConfigError(path + ".batch_size", "must be >= 1");
  if (!(s.lr > 0.0)) throw ConfigError(path + ".lr", "must be > 0");
  if (s.optimizer != "adam") throw ConfigError(path + ".optimizer", "only 'adam' is supported");
  return s;
}

template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

json to_json(const StudentConfig& c) {
  return {{"in_channels", c.in_channels},         {"hidden", c.hidden},
          {"stages", c.stages},                   {"blocks_per_stage", c.blocks_per_stage},
          {"convs_per_block", c.convs_per_block}, {"latent_channels", c.latent_channels},
          {"norm", std::string(to_string(c.norm))}, {"double_last_stage", c.double_last_stage}};
}

StudentConfig student_config_from_json(const json& j, const std::string& path) {
  StudentConfig c;
  std::string norm(to_string(c.norm));
  {
    Fields f(j, path);
    f.read("in_channels", c.in_channels);
    f.read("hidden", c.hidden);
    f.read("stages", c.stages);
    f.read("blocks_per_stage", c.blocks_per_stage);
    f.read("convs_per_block", c.convs_per_block);
    f.read("latent_channels", c.latent_channels);
    f.read("norm", norm);
    f.read("double_last_stage", c.double_last_stage);
  }
  guarded(path + ".norm", [&] { c.norm = norm_kind_from_string(norm); return 0; });
  guarded(path, [&] { c.validate(); return 0; });
  return c;
}

json to_json(const RunConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back(stage_to_json(s));
  return {
      {"seed", c.seed},
      {"device", c.device},
      {"output_dir", c.output_dir},
      {"data",
       {{"root", c.data.root},
        {"base_resolution", c.data.base_resolution},
        {"eval_subset_size", c.data.eval_subset_size},
        {"subset_seed", c.data.subset_seed},
        {"synthetic_count", c.data.synthetic_count},
        {"synthetic_resolution", c.data.synthetic_resolution}}},
      {"teacher",
       {{"kind", c.teacher.kind},
        {"seed", c.teacher.seed},
        {"resolution_bias", c.teacher.resolution_bias},
        {"artifact_path", c.teacher.artifact_path},
        {"adapter_id", c.teacher.adapter_id}}},
      {"student", to_json(c.student)},
      {"stages", stages},
      {"loss",
       {{"kind", std::string(to_string(c.loss.kind))},
        {"beta", c.loss.beta},
        {"term_weights", c.loss.term_weights},
        {"classic_huber", c.loss.classic_huber},
        {"mean_target", c.loss.mean_target}}},
      {"train", {{"checkpoint_every", c.train.checkpoint_every}, {"resume", c.train.resume}}},
      {"eval_scales", c.eval_scales},
      {"eval",
       {{"method", c.eval.method},
        {"position", c.eval.position},
        {"antialias_down", c.eval.antialias_down},
        {"batch_size", c.eval.batch_size},
        {"student_checkpoint", c.eval.student_checkpoint},
        {"extra_models", c.eval.extra_models}}},
      {"metric_backends", {{"perceptual", c.metric_backends.perceptual}, {"features", c.metric_backends.features}}},
      {"analysis",
       {{"resolutions", c.analysis.resolutions},
        {"alphas", c.analysis.alphas},
        {"interp_low", c.analysis.interp_low},
        {"interp_high", c.analysis.interp_high},
        {"teacher_sampled", c.analysis.teacher_sampled},
        {"reducer", c.analysis.reducer}}},
      {"probe", {{"r0", c.probe.r0}, {"resolutions", c.probe.resolutions}, {"method", c.probe.method}}},
      {"autoencoder",
       {{"hidden", c.autoencoder.hidden},
        {"max_hidden", c.autoencoder.max_hidden},
        {"stages", c.autoencoder.stages},
        {"blocks_per_stage", c.autoencoder.blocks_per_stage},
        {"kl_weight", c.autoencoder.kl_weight},
        {"stage", stage_to_json(c.autoencoder.stage)}}},
      {"ablate",
       {{"studies", c.ablate.studies},
        {"hidden", c.ablate.hidden},
        {"losses", c.ablate.losses},
        {"interp_scale", c.ablate.interp_scale}}},
      {"bench", {{"resolution", c.bench.resolution}, {"n_iter", c.bench.n_iter}, {"warmup", c.bench.warmup}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields top(j, "");
  top.read("seed", c.seed);
  top.read("device", c.device);
  top.read("output_dir", c.output_dir);
  if (const json* d = top.sub("data")) {
    Fields f(*d, "data");
    f.read("root", c.data.root);
    f.read("base_resolution", c.data.base_resolution);
    f.read("eval_subset_size", c.data.eval_subset_size);
    f.read("subset_seed", c.data.subset_seed);
    f.read("synthetic_count", c.data.synthetic_count);
    f.read("synthetic_resolution", c.data.synthetic_resolution);
  }
  if (c.data.base_resolution < 8) throw ConfigError("data.base_resolution", "must be >= 8");
  if (const json* t = top.sub("teacher")) {
    Fields f(*t, "teacher");
    f.read("kind", c.teacher.kind);
    f.read("seed", c.teacher.seed);
    f.read("resolution_bias", c.teacher.resolution_bias);
    f.read("artifact_path", c.teacher.artifact_path);
    f.read("adapter_id", c.teacher.adapter_id);
  }
  if (c.teacher.kind != "toy" && c.teacher.kind != "external") {
    throw ConfigError("teacher.kind", "expected toy|external, got '" + c.teacher.kind + "'");
  }
  if (c.teacher.resolution_bias != "none" && c.teacher.resolution_bias != "highres_sweet") {
    throw ConfigError("teacher.resolution_bias", "expected none|highres_sweet");
  }
  if (const json* s = top.sub("student")) c.student = student_config_from_json(*s, "student");
  if (const json* s = top.sub("stages")) {
    if (!s->is_array()) throw ConfigError("stages", "expected an array");
    c.stages.clear();
    for (std::size_t i = 0; i < s->size(); ++i) {
      c.stages.push_back(stage_from_json((*s)[i], fmt::format("stages[{}]", i)));
    }
  }
  if (const json* l = top.sub("loss")) {
    Fields f(*l, "loss");
    std::string kind(to_string(c.loss.kind));
    f.read("kind", kind);
    f.read("beta", c.loss.beta);
    f.read("term_weights", c.loss.term_weights);
    f.read("classic_huber", c.loss.classic_huber);
    f.read("mean_target", c.loss.mean_target);
    guarded("loss.kind", [&] { c.loss.kind = loss_kind_from_string(kind); return 0; });
  }
  guarded("loss", [&] { c.loss.validate(); return 0; });
  if (const json* t = top.sub("train")) {
    Fields f(*t, "train");
    f.read("checkpoint_every", c.train.checkpoint_every);
    f.read("resume", c.train.resume);
  }
  top.read("eval_scales", c.eval_scales);
  for (std::size_t i = 0; i < c.eval_scales.size(); ++i) {
    if (!(c.eval_scales[i] > 0.0)) throw ConfigError(fmt::format("eval_scales[{}]", i), "scale must be > 0");
  }
  if (const json* e = top.sub("eval")) {
    Fields f(*e, "eval");
    f.read("method", c.eval.method);
    f.read("position", c.eval.position);
    f.read("antialias_down", c.eval.antialias_down);
    f.read("batch_size", c.eval.batch_size);
    f.read("student_checkpoint", c.eval.student_checkpoint);
    f.read("extra_models", c.eval.extra_models);
  }
  if (const json* m = top.sub("metric_backends")) {
    Fields f(*m, "metric_backends");
    f.read("perceptual", c.metric_backends.perceptual);
    f.read("features", c.metric_backends.features);
  }
  if (const json* a = top.sub("analysis")) {
    Fields f(*a, "analysis");
    f.read("resolutions", c.analysis.resolutions);
    f.read("alphas", c.analysis.alphas);
    f.read("interp_low", c.analysis.interp_low);
    f.read("interp_high", c.analysis.interp_high);
    f.read("teacher_sampled", c.analysis.teacher_sampled);
    f.read("reducer", c.analysis.reducer);
  }
  if (const json* p = top.sub("probe")) {
    Fields f(*p, "probe");
    f.read("r0", c.probe.r0);
    f.read("resolutions", c.probe.resolutions);
    f.read("method", c.probe.method);
  }
  if (const json* a = top.sub("autoencoder")) {
    Fields f(*a, "autoencoder");
    f.read("hidden", c.autoencoder.hidden);
    f.read("max_hidden", c.autoencoder.max_hidden);
    f.read("stages", c.autoencoder.stages);
    f.read("blocks_per_stage", c.autoencoder.blocks_per_stage);
    f.read("kl_weight", c.autoencoder.kl_weight);
    if (const json* s = f.sub("stage")) c.autoencoder.stage = stage_from_json(*s, "autoencoder.stage");
  }
  if (c.autoencoder.hidden > c.autoencoder.max_hidden) {
    throw ConfigError("autoencoder.hidden", "exceeds autoencoder.max_hidden");
  }
  if (const json* a = top.sub("ablate")) {
    Fields f(*a, "ablate");
    f.read("studies", c.ablate.studies);
    f.read("hidden", c.ablate.hidden);
    f.read("losses", c.ablate.losses);
    f.read("interp_scale", c.ablate.interp_scale);
  }
  if (const json* b = top.sub("bench")) {
    Fields f(*b, "bench");
    f.read("resolution", c.bench.resolution);
    f.read("n_iter", c.bench.n_iter);
    f.read("warmup", c.bench.warmup);
  }
  if (c.bench.n_iter < 1) throw ConfigError("bench.n_iter", "must be > 0");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (node->is_array()) {
      // Numeric components index into existing arrays, e.g. stages.0.steps.
      std::size_t idx = 0;
      const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), idx);
      if (ec != std::errc() || end != part.data() + part.size() || idx >= node->size()) {
        throw ConfigError(key, "bad array index '" + part + "'");
      }
      if (dot == std::string::npos) {
        (*node)[idx] = value;
        return;
      }
      node = &(*node)[idx];
      start = dot + 1;
      continue;
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !((*node)[part].is_object() || (*node)[part].is_array())) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  json doc = to_json(RunConfig{});
  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError("config", "cannot open " + file->string());
    json user;
    try {
      user = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("config", e.what());
    }
    if (!user.is_object()) throw ConfigError("config", "top level must be an object");
    // Arrays replace defaults wholesale; objects merge.
    doc.merge_patch(user);
  }
  if (const char* env = std::getenv("RDIST_OUTPUT_DIR"); env && *env) doc["output_dir"] = env;
  if (const char* env = std::getenv("RDIST_DEVICE"); env && *env) doc["device"] = env;
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace rdist
