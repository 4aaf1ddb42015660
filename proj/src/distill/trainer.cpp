#include "rdist/distill/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rdist/core/archive.hpp"
#include "rdist/nn/adam.hpp"

namespace fs = std::filesystem;

namespace rdist {
namespace {

std::uint64_t stage_seed(std::uint64_t seed, int stage) {
  return make_rng(seed, "stage_loader", static_cast<std::uint64_t>(stage)).engine()();
}

ImageBatch next_batch(ImageLoader& loader) {
  auto b = loader.next();
  if (!b) throw std::runtime_error("training loader returned no data");
  return std::move(*b);
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

nlohmann::json TrainRecord::to_json() const {
  return {{"step", step}, {"stage", stage}, {"loss", loss}, {"terms", terms}, {"lr", lr}};
}

TrainRecord TrainRecord::from_json(const nlohmann::json& j) {
  TrainRecord r;
  r.step = j.at("step").get<long long>();
  r.stage = j.at("stage").get<int>();
  r.loss = j.at("loss").get<double>();
  r.terms = j.at("terms").get<std::map<std::string, double>>();
  r.lr = j.at("lr").get<double>();
  return r;
}

TrainLog::TrainLog(fs::path path) : path_(std::move(path)) {}

fs::path TrainLog::timing_path() const {
  fs::path p = path_;
  return p.replace_extension(".timing.jsonl");
}

void TrainLog::append(const TrainRecord& r, double wall_ms) {
  append_line(path_, r.to_json().dump());
  append_line(timing_path(), nlohmann::json{{"step", r.step}, {"wall_ms", wall_ms}}.dump());
}

void TrainLog::truncate_after(long long step) {
  for (const fs::path& p : {path_, timing_path()}) {
    if (!fs::exists(p)) continue;
    std::string kept;
    for (const auto& line : read_lines(p)) {
      if (nlohmann::json::parse(line).at("step").get<long long>() <= step) kept += line + "\n";
    }
    write_text_atomic(p, kept);
  }
}

void TrainLog::reset() {
  fs::remove(path_);
  fs::remove(timing_path());
}

std::vector<TrainRecord> TrainLog::records() const {
  std::vector<TrainRecord> out;
  if (!fs::exists(path_)) return out;
  for (const auto& line : read_lines(path_)) out.push_back(TrainRecord::from_json(nlohmann::json::parse(line)));
  return out;
}

fs::path latest_checkpoint(const fs::path& dir, const std::string& prefix) {
  fs::path best;
  long long best_step = -1;
  if (!fs::is_directory(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind(prefix, 0) != 0 || e.path().extension() == ".tmp") continue;
    const std::string digits = e.path().stem().string().substr(prefix.size());
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    const long long step = std::stoll(digits);
    if (step > best_step) {
      best_step = step;
      best = e.path();
    }
  }
  return best;
}

DistillOptions distill_options(const RunConfig& cfg) {
  DistillOptions o;
  o.output_dir = cfg.output_dir;
  o.checkpoint_every = cfg.train.checkpoint_every;
  o.resume = cfg.train.resume;
  o.seed = cfg.seed;
  o.perceptual = find_perceptual_backend(cfg.metric_backends.perceptual);
  return o;
}

DistillResult distill(StudentEncoder& student, const TeacherPtr& teacher, const std::vector<TrainStage>& stages,
                      const LossSpec& loss_spec, const DatasetSpec& data, const DistillOptions& opts) {
  DistillResult result;
  long long total_steps = 0;
  for (const auto& st : stages) {
    if (st.steps < 0 || st.batch_size <= 0 || !(st.lr > 0.0)) throw ContractError("invalid training stage");
    if (st.optimizer != "adam") throw ContractError("unsupported optimizer '" + st.optimizer + "'");
    Resolution::square(st.resolution).require_divisible(student.downsample_factor());
    total_steps += st.steps;
  }
  if (total_steps == 0) return result;

  const DistillLoss loss = build_loss(loss_spec, teacher, opts.perceptual);
  const std::string teacher_hash = teacher->parameter_hash();
  const fs::path ckpt_dir = opts.output_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  TrainLog log(opts.output_dir / "train_log.jsonl");
  nn::Adam adam(stages.front().lr);

  long long start = 0;
  if (opts.resume) {
    if (const fs::path latest = latest_checkpoint(ckpt_dir, "step_"); !latest.empty()) {
      LoadedStudent loaded = load_student(latest);
      if (loaded.header.value("teacher_hash", "") != teacher_hash) {
        throw ContractError("checkpoint " + latest.string() + " was trained against a different teacher");
      }
      student.load_from(loaded.archive);
      adam.load(loaded.archive);
      start = loaded.header.at("step").get<long long>();
      log.truncate_after(start);
      result.resumed_from = start;
      spdlog::info("resuming from {} (step {})", latest.string(), start);
    } else {
      log.reset();
    }
  } else {
    log.reset();
  }

  auto header = [&](long long step, int stage) {
    return nlohmann::json{{"step", step}, {"stage", stage}, {"teacher_hash", teacher_hash}, {"teacher", teacher->name()},
                          {"loss", to_string(loss_spec.kind)}};
  };

  const SubsetManifest manifest = full_manifest(data);
  long long global = 0;
  for (int si = 0; si < static_cast<int>(stages.size()); ++si) {
    const TrainStage& st = stages[si];
    if (start >= global + st.steps) {
      global += st.steps;
      continue;
    }
    ImageLoader loader(manifest, Resolution::square(st.resolution), st.batch_size, true, stage_seed(opts.seed, si), true);
    const long long done = std::max(0LL, start - global);
    loader.skip(done);
    adam.set_lr(st.lr);
    for (long long k = done; k < st.steps; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const long long step = global + k + 1;
      const ImageBatch x = next_batch(loader);
      const GaussianLatent g = teacher->encode(x);
      Rng rng = make_rng(opts.seed, "teacher_sample", static_cast<std::uint64_t>(step));
      const Tensor z_t = loss_spec.mean_target ? g.mean : sample_latent(g, rng).data();

      student.zero_grad();
      const Tensor z_s = student.forward_train(x.data());
      const LossEval ev = loss.evaluate(z_s, z_t, x, g);
      if (!std::isfinite(ev.value.total)) {
        const fs::path last_good = ckpt_dir / "last_good.rdck";
        save_student(last_good, student, header(step - 1, si), &adam);
        throw NonFiniteLossError(fmt::format("non-finite loss at step {} (stage {})", step, si), last_good);
      }
      student.backward(ev.grad);
      adam.step(student.parameters());

      TrainRecord rec{step, si, ev.value.total, ev.value.terms, st.lr};
      log.append(rec, elapsed_ms(t0));
      result.log.push_back(std::move(rec));
      if (opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0) {
        save_student(ckpt_dir / fmt::format("step_{:08d}.rdck", step), student, header(step, si), &adam);
      }
    }
    global += st.steps;
  }

  result.final_checkpoint = ckpt_dir / "student_final.rdck";
  save_student(result.final_checkpoint, student, header(total_steps, static_cast<int>(stages.size()) - 1), &adam);
  if (teacher->parameter_hash() != teacher_hash) throw std::logic_error("teacher parameters changed during distillation");
  return result;
}

ScratchResult train_scratch_autoencoder(const AutoencoderConfig& cfg, const DatasetSpec& data, const TrainStage& stage,
                                        const DistillOptions& opts) {
  AutoencoderShape shape;
  shape.hidden = cfg.hidden;
  shape.stages = cfg.stages;
  shape.blocks_per_stage = cfg.blocks_per_stage;
  if (cfg.stages != 3) throw ConfigError("autoencoder.stages", "must be 3 to match the 8x latent grid");
  if (shape.top_width() > cfg.max_hidden) {
    throw ConfigError("autoencoder.hidden", fmt::format("widest layer {} exceeds max_hidden {}", shape.top_width(), cfg.max_hidden));
  }
  if (stage.steps < 0 || stage.batch_size <= 0 || !(stage.lr > 0.0)) throw ContractError("invalid training stage");
  Resolution::square(stage.resolution).require_divisible(kDownsampleFactor);

  ScratchResult result;
  result.model = std::make_shared<AutoencoderModel>(shape, opts.seed);
  if (stage.steps == 0) return result;

  const fs::path ckpt_dir = opts.output_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  TrainLog log(opts.output_dir / "scratch_log.jsonl");
  nn::Adam adam(stage.lr);
  long long start = 0;
  if (opts.resume) {
    if (const fs::path latest = latest_checkpoint(ckpt_dir, "scratch_step_"); !latest.empty()) {
      const Archive ar = read_archive(latest);
      result.model = AutoencoderModel::load(latest);
      adam.load(ar);
      start = ar.header.at("step").get<long long>();
      log.truncate_after(start);
    } else {
      log.reset();
    }
  } else {
    log.reset();
  }
  AutoencoderModel& m = *result.model;

  ImageLoader loader(full_manifest(data), Resolution::square(stage.resolution), stage.batch_size, true,
                     stage_seed(opts.seed, 0), true);
  loader.skip(start);
  for (long long step = start + 1; step <= stage.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const ImageBatch x = next_batch(loader);
    m.zero_grad();
    const Tensor raw = m.encoder().forward_train(x.data());
    const Tensor mu = raw.slice_channels(0, kLatentChannels);
    Tensor logvar = raw.slice_channels(kLatentChannels, 2 * kLatentChannels);
    for (float& v : logvar.values()) v = std::clamp(v, -30.0f, 20.0f);

    Rng rng = make_rng(opts.seed, "scratch_sample", static_cast<std::uint64_t>(step));
    Tensor eps(mu.shape());
    for (float& v : eps.values()) v = rng.normal();
    Tensor z(mu.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = mu.data()[i] + std::exp(0.5f * logvar.data()[i]) * eps.data()[i];

    const Tensor rec = m.decoder().forward_train(z);
    double recon = 0.0;
    Tensor g_rec(rec.shape());
    const double inv_px = 1.0 / static_cast<double>(rec.numel());
    for (std::size_t i = 0; i < rec.numel(); ++i) {
      const double d = static_cast<double>(rec.data()[i]) - x.data().data()[i];
      recon += d * d * inv_px;
      g_rec.data()[i] = static_cast<float>(2.0 * d * inv_px);
    }
    double kl = 0.0;
    const double inv_lat = 1.0 / static_cast<double>(mu.numel());
    for (std::size_t i = 0; i < mu.numel(); ++i) {
      const double lv = logvar.data()[i];
      kl += 0.5 * (mu.data()[i] * mu.data()[i] + std::exp(lv) - 1.0 - lv) * inv_lat;
    }
    const double total = recon + cfg.kl_weight * kl;
    if (!std::isfinite(total)) {
      const fs::path last_good = ckpt_dir / "scratch_last_good.rdae";
      m.save(last_good, {{"step", step - 1}}, &adam);
      throw NonFiniteLossError(fmt::format("non-finite loss at step {}", step), last_good);
    }

    const Tensor g_z = m.decoder().backward(g_rec);
    Tensor g_raw(raw.shape());
    for (int n = 0; n < raw.n(); ++n) {
      for (int c = 0; c < kLatentChannels; ++c) {
        const float* gz = g_z.plane(n, c);
        const float* mp = mu.plane(n, c);
        const float* lp = logvar.plane(n, c);
        const float* ep = eps.plane(n, c);
        float* gm = g_raw.plane(n, c);
        float* gl = g_raw.plane(n, c + kLatentChannels);
        for (std::size_t i = 0; i < mu.shape().plane_size(); ++i) {
          const double sd = std::exp(0.5 * lp[i]);
          gm[i] = static_cast<float>(gz[i] + cfg.kl_weight * mp[i] * inv_lat);
          gl[i] = static_cast<float>(gz[i] * 0.5 * sd * ep[i] + cfg.kl_weight * 0.5 * (sd * sd - 1.0) * inv_lat);
        }
      }
    }
    m.encoder().backward(g_raw);
    adam.step(m.parameters());

    TrainRecord rec_log{step, 0, total, {{"recon", recon}, {"kl", kl}}, stage.lr};
    log.append(rec_log, elapsed_ms(t0));
    result.log.push_back(std::move(rec_log));
    if (opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0) {
      m.save(ckpt_dir / fmt::format("scratch_step_{:08d}.rdae", step), {{"step", step}}, &adam);
    }
  }
  result.final_checkpoint = ckpt_dir / "scratch_vae.rdae";
  m.save(result.final_checkpoint, {{"step", stage.steps}, {"resolution", stage.resolution}});
  return result;
}

}  // namespace rdist
