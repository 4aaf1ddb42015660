#include "rdist/eval/resolution_eval.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rdist/core/archive.hpp"
#include "rdist/core/hash.hpp"

namespace fs = std::filesystem;

namespace rdist {
namespace {

ImageBatch resize_to(const ImageBatch& x, const Resolution& target, const RemapProtocol& p) {
  const Resolution from = x.resolution();
  const bool shrinking = target.height < from.height || target.width < from.width;
  return resize_images(x, target, p.method, shrinking && p.antialias_down);
}

ImageBatch roundtrip_plain(const EncodeFn& encode, const DecodeFn& decode, const ImageBatch& x) {
  ImageBatch rec = decode(encode(x));
  if (rec.resolution() != x.resolution() || rec.channels() != x.channels()) {
    throw ContractError(fmt::format("decoder returned {}x{} for a {} input", rec.channels(), rec.resolution().str(),
                                    x.resolution().str()));
  }
  return rec;
}

}  // namespace

std::string_view to_string(RemapPosition p) {
  switch (p) {
    case RemapPosition::kPre: return "pre";
    case RemapPosition::kPost: return "post";
    case RemapPosition::kNone: return "none";
  }
  return "none";
}

RemapPosition remap_position_from_string(std::string_view s) {
  if (s == "pre") return RemapPosition::kPre;
  if (s == "post") return RemapPosition::kPost;
  if (s == "none") return RemapPosition::kNone;
  throw ContractError(fmt::format("unknown remap position '{}'", s));
}

nlohmann::json RemapProtocol::to_json() const {
  return {{"scale", scale.value()},
          {"method", to_string(method)},
          {"position", to_string(position)},
          {"antialias_down", antialias_down}};
}

std::string RemapProtocol::hash() const {
  const std::string text = fmt::format("{}|{}|{}", to_string(method), to_string(position), antialias_down);
  return sha256_hex(text).substr(0, 12);
}

ImageBatch remap_roundtrip(const EncodeFn& encode, const DecodeFn& decode, const ImageBatch& x, const RemapProtocol& proto) {
  x.require_range(ValueRange::kSymmetric);
  const Resolution native = x.resolution();
  ImageBatch out;
  switch (proto.position) {
    case RemapPosition::kNone:
      out = roundtrip_plain(encode, decode, x);
      break;
    case RemapPosition::kPre: {
      const Resolution scaled = proto.scale.apply(native);
      scaled.require_divisible(kDownsampleFactor);
      const ImageBatch up = resize_to(x, scaled, proto);
      out = resize_to(roundtrip_plain(encode, decode, up), native, proto);
      break;
    }
    case RemapPosition::kPost: {
      const Resolution scaled = proto.scale.apply(native);
      const ImageBatch rec = roundtrip_plain(encode, decode, x);
      out = resize_to(resize_to(rec, scaled, proto), native, proto);
      break;
    }
  }
  if (out.resolution() != native) throw ContractError("remap_roundtrip: output resolution differs from input");
  return out;
}

std::string EvalRecord::key() const { return fmt::format("{}|{}|{}", model_id, scale.str(), protocol.hash()); }

nlohmann::json EvalRecord::to_json() const {
  nlohmann::json j{{"model_id", model_id},
                   {"scale", scale.value()},
                   {"protocol", protocol.to_json()},
                   {"protocol_hash", protocol.hash()},
                   {"target", target.str()},
                   {"encoded", encoded.str()},
                   {"ok", ok}};
  if (ok) {
    j["metrics"] = report.to_json();
  } else {
    j["error"] = error;
  }
  return j;
}

EvalRecord EvalRecord::from_json(const nlohmann::json& j) {
  auto parse_res = [](const std::string& s) {
    const auto x = s.find('x');
    return Resolution(std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1)));
  };
  EvalRecord r;
  r.model_id = j.at("model_id").get<std::string>();
  r.scale = ScaleFactor(j.at("scale").get<double>());
  const auto& p = j.at("protocol");
  r.protocol.scale = r.scale;
  r.protocol.method = resize_method_from_string(p.at("method").get<std::string>());
  r.protocol.position = remap_position_from_string(p.at("position").get<std::string>());
  r.protocol.antialias_down = p.at("antialias_down").get<bool>();
  r.target = parse_res(j.at("target").get<std::string>());
  r.encoded = parse_res(j.at("encoded").get<std::string>());
  r.ok = j.at("ok").get<bool>();
  if (r.ok) {
    r.report = MetricReport::from_json(j.at("metrics"));
  } else {
    r.error = j.value("error", "");
  }
  return r;
}

SweepModel teacher_sweep_model(const std::string& id, TeacherPtr teacher) {
  return SweepModel{id, [teacher](const ImageBatch& x) { return mean_latent(teacher->encode(x)); },
                    [teacher](const LatentBatch& z) { return teacher->decode(z); }};
}

std::vector<EvalRecord> load_records(const fs::path& path) {
  std::vector<EvalRecord> out;
  if (!fs::exists(path)) return out;
  for (const auto& line : read_lines(path)) out.push_back(EvalRecord::from_json(nlohmann::json::parse(line)));
  return out;
}

std::vector<EvalRecord> sweep(const std::vector<SweepModel>& models, const SubsetManifest& data,
                              const std::vector<ScaleFactor>& scales, const RemapProtocol& proto_base,
                              const SweepOptions& opts) {
  if (opts.batch_size <= 0) throw ContractError("sweep batch_size must be > 0");
  std::map<std::string, EvalRecord> done;
  if (opts.records_path) {
    for (auto& r : load_records(*opts.records_path)) {
      if (r.ok) done[r.key()] = std::move(r);
    }
  }

  std::optional<ImageBatch> images;
  std::vector<EvalRecord> out;
  for (const auto& model : models) {
    for (const ScaleFactor& s : scales) {
      RemapProtocol proto = proto_base;
      proto.scale = s;
      EvalRecord rec;
      rec.model_id = model.id;
      rec.scale = s;
      rec.protocol = proto;
      rec.target = opts.resolution;
      rec.encoded = proto.position == RemapPosition::kPre ? s.apply(opts.resolution) : opts.resolution;
      if (auto it = done.find(rec.key()); it != done.end()) {
        out.push_back(it->second);
        continue;
      }
      try {
        if (!images) images = load_all(data, opts.resolution);
        std::vector<Tensor> parts;
        for (int b = 0; b < images->size(); b += opts.batch_size) {
          const int e = std::min(images->size(), b + opts.batch_size);
          const ImageBatch chunk(images->data().slice_batch(b, e), ValueRange::kSymmetric);
          parts.push_back(remap_roundtrip(model.encode, model.decode, chunk, proto).data());
        }
        const ImageBatch rec_images(Tensor::concat_batch(parts), ValueRange::kSymmetric);
        if (rec_images.resolution() != rec.target) throw ContractError("metric inputs are not at the target resolution");
        rec.report = compute_metrics(rec_images, *images, opts.metrics);
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
        spdlog::warn("sweep cell {} failed: {}", rec.key(), e.what());
      }
      if (opts.records_path) append_line(*opts.records_path, rec.to_json().dump());
      out.push_back(std::move(rec));
    }
  }
  return out;
}

bool lower_is_better(const std::string& metric) {
  if (metric == "mse" || metric == "lpips" || metric == "rfid") return true;
  if (metric == "psnr" || metric == "ssim") return false;
  throw ContractError("unknown criterion '" + metric + "'");
}

ScaleFactor find_sweet_spot(const std::vector<EvalRecord>& records, const std::string& metric) {
  const bool lower = lower_is_better(metric);
  std::vector<std::pair<ScaleFactor, double>> pts;
  for (const auto& r : records) {
    if (r.ok && r.report.has(metric)) pts.emplace_back(r.scale, r.report.value(metric));
  }
  if (pts.empty()) throw ContractError("criterion '" + metric + "' is absent from the records");
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (pts.front().first == pts.back().first) throw ContractError("find_sweet_spot needs at least 2 evaluated scales");
  auto best = pts.front();
  for (const auto& p : pts) {
    if (lower ? p.second < best.second : p.second > best.second) best = p;
  }
  return best.first;
}

nlohmann::json BenchRecord::to_json() const {
  nlohmann::json j{{"model_id", model_id},
                   {"resolution", resolution.str()},
                   {"n_iter", n_iter},
                   {"warmup", warmup},
                   {"ms_per_image", ms_per_image},
                   {"parameter_count", parameter_count},
                   {"parameter_bytes", parameter_bytes},
                   {"peak_rss_mb", peak_rss_mb}};
  j["peak_accelerator_mb"] = peak_accelerator_mb ? nlohmann::json(*peak_accelerator_mb) : nlohmann::json("unavailable");
  return j;
}

BenchRecord benchmark(const std::string& model_id, const EncodeFn& encode, const Resolution& resolution, int n_iter,
                      int warmup, std::size_t parameter_count) {
  if (n_iter <= 0) throw ContractError("benchmark n_iter must be > 0");
  Tensor t(Shape{1, 3, resolution.height, resolution.width});
  Rng rng = make_rng(0, "bench_input");
  for (float& v : t.values()) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  const ImageBatch x(std::move(t), ValueRange::kSymmetric);
  for (int i = 0; i < warmup; ++i) (void)encode(x);
  double total = 0.0;
  for (int i = 0; i < n_iter; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)encode(x);
    total += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  BenchRecord r;
  r.model_id = model_id;
  r.resolution = resolution;
  r.n_iter = n_iter;
  r.warmup = warmup;
  r.ms_per_image = total / n_iter;
  r.parameter_count = parameter_count;
  r.parameter_bytes = parameter_count * sizeof(float);
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) == 0) r.peak_rss_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;
  return r;
}

}  // namespace rdist
