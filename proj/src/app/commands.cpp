#include "rdist/app/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rdist/analysis/latent_analysis.hpp"
#include "rdist/core/archive.hpp"
#include "rdist/distill/trainer.hpp"
#include "rdist/eval/resolution_eval.hpp"
#include "rdist/probe/theory_probe.hpp"
#include "rdist/report/plots.hpp"
#include "rdist/report/tables.hpp"
#include "rdist/teacher/autoencoder.hpp"

namespace rdist::app {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTeacherId = "teacher";
constexpr const char* kStudentId = "distilled";
constexpr const char* kScratchId = "scratch";

fs::path out_dir(const RunConfig& cfg) { return fs::path(cfg.output_dir); }

std::string rel(const RunConfig& cfg, const fs::path& p) { return fs::relative(p, out_dir(cfg)).generic_string(); }

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  write_text_atomic(path, j.dump(2) + "\n");
}

template <class Fn>
auto config_field(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw ConfigError(field, e.what());
  }
}

DatasetSpec dataset_spec(const RunConfig& cfg, Split split) {
  DatasetSpec d;
  d.root = cfg.data.root;
  d.split = split;
  d.base_resolution = Resolution::square(cfg.data.base_resolution);
  d.eval_subset_size = cfg.data.eval_subset_size;
  d.subset_seed = cfg.data.subset_seed;
  return d;
}

Resolution eval_resolution(const RunConfig& cfg) {
  const Resolution r = Resolution::square(cfg.data.base_resolution);
  config_field("data.base_resolution", [&] { r.require_divisible(kDownsampleFactor); return 0; });
  return r;
}

MetricOptions metric_options(const RunConfig& cfg) {
  MetricOptions m;
  auto resolve = [](const std::string& id, const std::string& field, auto find) {
    auto backend = find(id);
    if (!backend && !id.empty() && id != "none") throw ConfigError(field, "unknown backend '" + id + "'");
    return backend;
  };
  m.perceptual = resolve(cfg.metric_backends.perceptual, "metric_backends.perceptual", find_perceptual_backend);
  m.features = resolve(cfg.metric_backends.features, "metric_backends.features", find_feature_backend);
  return m;
}

RemapProtocol base_protocol(const RunConfig& cfg) {
  RemapProtocol p;
  p.method = config_field("eval.method", [&] { return resize_method_from_string(cfg.eval.method); });
  p.position = config_field("eval.position", [&] { return remap_position_from_string(cfg.eval.position); });
  p.antialias_down = cfg.eval.antialias_down;
  return p;
}

std::vector<ScaleFactor> eval_scales(const RunConfig& cfg) {
  std::vector<ScaleFactor> out;
  for (double s : cfg.eval_scales) out.emplace_back(s);
  return out;
}

SweepOptions sweep_options(const RunConfig& cfg, const Resolution& res, std::optional<fs::path> records) {
  if (cfg.eval.batch_size <= 0) throw ConfigError("eval.batch_size", "must be > 0");
  SweepOptions o;
  o.resolution = res;
  o.batch_size = cfg.eval.batch_size;
  o.metrics = metric_options(cfg);
  o.records_path = std::move(records);
  return o;
}

std::vector<Resolution> square_resolutions(const std::vector<int>& sides, const std::string& field) {
  std::vector<Resolution> out;
  for (std::size_t i = 0; i < sides.size(); ++i) {
    out.push_back(config_field(fmt::format("{}[{}]", field, i), [&] {
      Resolution r = Resolution::square(sides[i]);
      r.require_divisible(kDownsampleFactor);
      return r;
    }));
  }
  return out;
}

std::shared_ptr<StudentEncoder> load_student_model(const fs::path& path) {
  LoadedStudent loaded = load_student(path);
  return std::make_shared<StudentEncoder>(std::move(loaded.student));
}

SweepModel student_sweep_model(const std::string& id, std::shared_ptr<const StudentEncoder> student, TeacherPtr teacher) {
  return SweepModel{id, [student](const ImageBatch& x) { return student->forward(x); },
                    [teacher](const LatentBatch& z) { return teacher->decode(z); }};
}

EncodeFn student_encode(std::shared_ptr<const StudentEncoder> student) {
  return [student](const ImageBatch& x) { return student->forward(x); };
}

EncodeFn teacher_mean_encode(TeacherPtr teacher) {
  return [teacher](const ImageBatch& x) { return mean_latent(teacher->encode(x)); };
}

fs::path scratch_checkpoint_path(const RunConfig& cfg) { return out_dir(cfg) / "checkpoints" / "scratch_vae.rdae"; }

std::shared_ptr<const StudentEncoder> maybe_student(const RunConfig& cfg) {
  const fs::path p = student_checkpoint_path(cfg);
  if (!fs::exists(p)) {
    spdlog::warn("no student checkpoint at {}; run distill first to include it", p.string());
    return nullptr;
  }
  return load_student_model(p);
}

std::shared_ptr<const StudentEncoder> require_student(const RunConfig& cfg) {
  const fs::path p = student_checkpoint_path(cfg);
  if (!fs::exists(p)) throw std::runtime_error("no student checkpoint at " + p.string() + "; run distill first");
  return load_student_model(p);
}

std::vector<SweepModel> sweep_models(const RunConfig& cfg, const TeacherPtr& teacher) {
  std::vector<SweepModel> models{teacher_sweep_model(kTeacherId, teacher)};
  if (auto student = maybe_student(cfg)) models.push_back(student_sweep_model(kStudentId, student, teacher));
  if (fs::exists(scratch_checkpoint_path(cfg))) {
    models.push_back(teacher_sweep_model(kScratchId, AutoencoderModel::load(scratch_checkpoint_path(cfg))));
  }
  for (std::size_t i = 0; i < cfg.eval.extra_models.size(); ++i) {
    const auto& m = cfg.eval.extra_models[i];
    const std::string field = fmt::format("eval.extra_models[{}]", i);
    for (const char* key : {"id", "adapter", "path"}) {
      if (!m.count(key)) throw ConfigError(field + "." + key, "missing");
    }
    models.push_back(teacher_sweep_model(m.at("id"), load_external_teacher(m.at("path"), m.at("adapter"))));
  }
  return models;
}

double training_hours(const fs::path& timing_path) {
  double ms = 0.0;
  for (const auto& line : read_lines(timing_path)) {
    if (!line.empty()) ms += json::parse(line).value("wall_ms", 0.0);
  }
  return ms / 3.6e6;
}

std::string mb(std::size_t bytes) { return fmt::format("{:.2f}", static_cast<double>(bytes) / (1024.0 * 1024.0)); }

void write_loss_plot(const fs::path& svg, const std::string& title, const std::vector<TrainRecord>& records) {
  Series s{"loss", {}, {}};
  for (const auto& r : records) {
    s.x.push_back(static_cast<double>(r.step));
    s.y.push_back(r.loss);
  }
  write_plot(svg, PlotSpec{title, "step", "loss", false, false}, {s});
}

// Trains (or reuses) one ablation student under `dir`.
std::shared_ptr<const StudentEncoder> ablation_student(const RunConfig& cfg, const StudentConfig& scfg, const LossSpec& loss,
                                                       const TeacherPtr& teacher, const fs::path& dir) {
  const fs::path final_ckpt = dir / "checkpoints" / "student_final.rdck";
  if (fs::exists(final_ckpt)) {
    spdlog::info("reusing {}", final_ckpt.string());
    return load_student_model(final_ckpt);
  }
  auto student = std::make_shared<StudentEncoder>(build_student(scfg, cfg.seed));
  DistillOptions opts = distill_options(cfg);
  opts.output_dir = dir;
  opts.resume = true;
  distill(*student, teacher, cfg.stages, loss, dataset_spec(cfg, Split::kTrain), opts);
  return student;
}

const EvalRecord& single_record(const std::vector<EvalRecord>& recs, const std::string& id) {
  for (const auto& r : recs) {
    if (r.model_id == id) return r;
  }
  throw std::runtime_error("no evaluation record for " + id);
}

ReportRow metrics_row(const EvalRecord& rec) {
  ReportRow row = row_from_record(rec);
  row.labels.clear();
  return row;
}

// ---- commands ----

void cmd_make_synthetic(const RunConfig& cfg) {
  if (cfg.data.synthetic_count <= 0) throw ConfigError("data.synthetic_count", "must be > 0 for make-synthetic");
  write_synthetic_dataset(cfg.data.root, cfg.data.synthetic_count, cfg.data.synthetic_resolution, cfg.seed);
  spdlog::info("wrote {} train and {} val images under {}", cfg.data.synthetic_count, cfg.data.synthetic_count,
               cfg.data.root);
}

void cmd_distill(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  StudentEncoder student = build_student(cfg.student, cfg.seed);
  const DistillOptions opts = distill_options(cfg);
  const DistillResult res = distill(student, teacher, cfg.stages, cfg.loss, dataset_spec(cfg, Split::kTrain), opts);
  if (res.final_checkpoint.empty()) {
    spdlog::warn("no training steps configured; nothing written");
    return;
  }
  const auto records = TrainLog(out_dir(cfg) / "train_log.jsonl").records();
  write_loss_plot(out_dir(cfg) / "plots" / "distill_loss.svg", "distillation loss", records);
  write_json(out_dir(cfg) / "distill_summary.json",
             {{"final_checkpoint", rel(cfg, res.final_checkpoint)},
              {"steps", records.empty() ? 0 : records.back().step},
              {"final_loss", records.empty() ? 0.0 : records.back().loss},
              {"parameter_count", student.parameter_count()},
              {"parameter_hash", student.parameter_hash()},
              {"teacher", teacher->name()},
              {"teacher_hash", teacher->parameter_hash()}});
  spdlog::info("student saved to {}", res.final_checkpoint.string());
}

void cmd_train_scratch(const RunConfig& cfg) {
  ensure_dataset(cfg);
  DistillOptions opts = distill_options(cfg);
  const ScratchResult res = config_field("autoencoder", [&] {
    return train_scratch_autoencoder(cfg.autoencoder, dataset_spec(cfg, Split::kTrain), cfg.autoencoder.stage, opts);
  });
  const auto records = TrainLog(out_dir(cfg) / "scratch_log.jsonl").records();
  write_loss_plot(out_dir(cfg) / "plots" / "scratch_loss.svg", "from-scratch VAE loss", records);
  write_json(out_dir(cfg) / "scratch_summary.json",
             {{"final_checkpoint", rel(cfg, res.final_checkpoint)},
              {"steps", records.empty() ? 0 : records.back().step},
              {"final_loss", records.empty() ? 0.0 : records.back().loss},
              {"parameter_count", res.model->parameter_count()},
              {"parameter_hash", res.model->parameter_hash()}});
}

void cmd_eval_sweep(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  const SubsetManifest manifest = eval_manifest(cfg);
  const auto models = sweep_models(cfg, teacher);
  const auto scales = eval_scales(cfg);
  const fs::path dir = out_dir(cfg) / "eval";
  fs::create_directories(dir);
  const auto records = sweep(models, manifest, scales, base_protocol(cfg),
                             sweep_options(cfg, eval_resolution(cfg), dir / "records.jsonl"));

  // Table rows grouped by scale, models in sweep order.
  std::vector<ReportRow> rows;
  for (const auto& s : scales) {
    for (const auto& m : models) {
      for (const auto& r : records) {
        if (r.model_id == m.id && r.scale == s) rows.push_back(row_from_record(r));
      }
    }
  }
  write_table(render_table(rows, TableLayout::kTable1), dir / "table1");

  json spots = json::object();
  std::vector<Series> psnr_series, mse_series;
  for (const auto& m : models) {
    std::vector<EvalRecord> mine;
    Series ps{m.id, {}, {}}, ms{m.id, {}, {}};
    for (const auto& r : records) {
      if (r.model_id != m.id || !r.ok) continue;
      mine.push_back(r);
      ps.x.push_back(r.scale.value());
      ps.y.push_back(r.report.value("psnr"));
      ms.x.push_back(r.scale.value());
      ms.y.push_back(r.report.value("mse") * 1e4);
    }
    psnr_series.push_back(ps);
    mse_series.push_back(ms);
    json entry = json::object();
    for (const char* metric : {"mse", "psnr", "ssim", "lpips"}) {
      if (mine.size() < 2 || !std::all_of(mine.begin(), mine.end(), [&](const auto& r) { return r.report.has(metric); })) {
        entry[metric] = "unavailable";
      } else {
        entry[metric] = find_sweet_spot(mine, metric).value();
      }
    }
    spots[m.id] = entry;
  }
  write_json(dir / "sweet_spots.json", spots);
  write_plot(dir / "psnr_vs_scale.svg", PlotSpec{"PSNR across scale factors", "scale factor", "PSNR (dB)", false, false},
             psnr_series);
  write_plot(dir / "mse_vs_scale.svg", PlotSpec{"MSE across scale factors", "scale factor", "MSE (x1e-4)", false, false},
             mse_series);
  const auto failed = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok; });
  if (failed > 0) spdlog::warn("{} evaluation cells failed; see {}", failed, (dir / "records.jsonl").string());
}

void cmd_analyze_latents(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  const auto student = maybe_student(cfg);
  const SubsetManifest manifest = eval_manifest(cfg);
  const auto resolutions = square_resolutions(cfg.analysis.resolutions, "analysis.resolutions");
  const fs::path dir = out_dir(cfg) / "analysis";
  fs::create_directories(dir);
  const int batch = cfg.eval.batch_size;

  const auto t_stats = latent_stats_sweep(kTeacherId, teacher_stats_encoder(teacher, cfg.analysis.teacher_sampled, cfg.seed),
                                          manifest, resolutions, batch);
  std::vector<LatentStats> s_stats;
  if (student) s_stats = latent_stats_sweep(kStudentId, keyed(student_encode(student)), manifest, resolutions, batch);

  json stats = json::array();
  Series t_mean{kTeacherId, {}, {}}, t_std{kTeacherId, {}, {}}, s_mean{kStudentId, {}, {}}, s_std{kStudentId, {}, {}};
  for (const auto& s : t_stats) {
    stats.push_back(s.to_json());
    t_mean.x.push_back(s.resolution.height);
    t_mean.y.push_back(s.mean);
    t_std.x.push_back(s.resolution.height);
    t_std.y.push_back(s.std);
  }
  for (const auto& s : s_stats) {
    stats.push_back(s.to_json());
    s_mean.x.push_back(s.resolution.height);
    s_mean.y.push_back(s.mean);
    s_std.x.push_back(s.resolution.height);
    s_std.y.push_back(s.std);
  }
  write_json(dir / "latent_stats.json", stats);
  std::vector<Series> means{t_mean}, stds{t_std};
  if (student) {
    means.push_back(s_mean);
    stds.push_back(s_std);
  }
  write_plot(dir / "latent_mean.svg", PlotSpec{"Latent mean vs resolution", "resolution (side)", "mean", false, true}, means);
  write_plot(dir / "latent_std.svg", PlotSpec{"Latent std vs resolution", "resolution (side)", "std", false, true}, stds);

  if (student) {
    const DivergenceTable div = divergence_sweep(t_stats, s_stats);
    write_json(dir / "divergence.json", div.to_json());
    Series kl{"KL", {}, {}}, js{"JS", {}, {}};
    for (const auto& r : div.rows) {
      kl.x.push_back(r.resolution.height);
      kl.y.push_back(r.kl);
      js.x.push_back(r.resolution.height);
      js.y.push_back(r.js);
    }
    write_plot(dir / "divergence.svg", PlotSpec{"Teacher/student divergence", "resolution (side)", "divergence", false, true},
               {kl, js});
  }

  // Embedding export over mean latents.
  std::map<std::string, std::map<Resolution, LatentBatch>> latents;
  const EncodeFn t_enc = teacher_mean_encode(teacher);
  for (const auto& r : resolutions) {
    const ImageBatch x = load_all(manifest, r);
    latents[kTeacherId][r] = t_enc(x);
    if (student) latents[kStudentId][r] = student->forward(x);
  }
  const fs::path emb_csv = dir / "embeddings.csv";
  const EmbeddingExport emb = export_embeddings(latents, cfg.analysis.reducer, emb_csv);
  json radial = json::object();
  std::vector<Series> radial_series;
  for (const auto& [model, per_res] : emb.radial) {
    Series s{model, {}, {}};
    for (const auto& [r, v] : per_res) {
      radial[model][r.str()] = v;
      s.x.push_back(r.height);
      s.y.push_back(v);
    }
    radial_series.push_back(s);
  }
  write_json(dir / "embedding_summary.json", {{"csv", rel(cfg, emb_csv)},
                                              {"rows", emb.rows},
                                              {"reduced", emb.reduced},
                                              {"common_grid", {emb.common_grid.h, emb.common_grid.w}},
                                              {"radial", radial}});
  write_plot(dir / "radial.svg", PlotSpec{"Mean latent norm vs resolution", "resolution (side)", "RMS norm", false, true},
             radial_series);
  if (emb.reduced) {
    std::map<std::string, Series> points;
    const auto lines = read_lines(emb_csv);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      std::stringstream ss(lines[i]);
      std::string model, res, image, x, y;
      std::getline(ss, model, ',');
      std::getline(ss, res, ',');
      std::getline(ss, image, ',');
      std::getline(ss, x, ',');
      std::getline(ss, y, ',');
      Series& s = points[model + "@" + res];
      s.name = model + "@" + res;
      s.x.push_back(std::stod(x));
      s.y.push_back(std::stod(y));
    }
    std::vector<Series> all;
    for (auto& [k, s] : points) all.push_back(std::move(s));
    write_plot(dir / "embedding_2d.svg", PlotSpec{"Latent embedding (2-D)", "component 1", "component 2", true, false}, all);
  }

  // Interpolation between the first two eval images.
  if (manifest.size() < 2) {
    spdlog::warn("interpolation needs at least two eval images; skipped");
    return;
  }
  SubsetManifest pair = manifest;
  pair.entries.resize(2);
  json interp = json::array();
  for (int side : {cfg.analysis.interp_low, cfg.analysis.interp_high}) {
    const Resolution r = square_resolutions({side}, "analysis.interp_low")[0];
    const ImageBatch x = load_all(pair, r);
    const ImageBatch x1(x.data().slice_batch(0, 1), x.range());
    const ImageBatch x2(x.data().slice_batch(1, 2), x.range());
    std::vector<std::pair<std::string, EncodeFn>> encoders{{kTeacherId, t_enc}};
    if (student) encoders.emplace_back(kStudentId, student_encode(student));
    for (const auto& [id, enc] : encoders) {
      const auto path = interpolate_latents(enc(x1), enc(x2), cfg.analysis.alphas);
      const auto steps = continuity_report([&](const LatentBatch& z) { return teacher->decode(z); }, path, x1);
      for (const auto& s : steps) {
        json row{{"model_id", id}, {"resolution", r.str()}, {"index", s.index}, {"alpha", cfg.analysis.alphas[s.index]},
                 {"ok", s.ok}};
        if (!s.ok) row["error"] = s.error;
        if (s.adjacent_mse) row["adjacent_mse"] = *s.adjacent_mse;
        if (s.reference_mse) row["reference_mse"] = *s.reference_mse;
        interp.push_back(row);
      }
    }
  }
  write_json(dir / "interpolation.json", interp);
}

void cmd_probe_theory(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  const auto student = require_student(cfg);
  const SubsetManifest manifest = eval_manifest(cfg);
  const Resolution r0 = square_resolutions({cfg.probe.r0}, "probe.r0")[0];
  const ResizeMethod method = config_field("probe.method", [&] { return resize_method_from_string(cfg.probe.method); });
  const EncodeFn s_enc = student_encode(student);
  const EncodeFn t_enc = teacher_mean_encode(teacher);
  const fs::path dir = out_dir(cfg) / "probe";
  fs::create_directories(dir);

  const double eps = epsilon_alignment(s_enc, t_enc, manifest, r0);
  json rows = json::array();
  std::string csv = "r0,r,term_a,term_b,term_c,total,a_plus_b_plus_c,bound_violations\n";
  const auto targets = square_resolutions(cfg.probe.resolutions, "probe.resolutions");
  for (const auto& r : targets) {
    if (r.height < r0.height || r.width < r0.width) throw ConfigError("probe.resolutions", "every r must be >= probe.r0");
    const ErrorDecomposition d = decompose_error(s_enc, t_enc, manifest, r0, r, method);
    rows.push_back(d.to_json());
    csv += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", r0.str(), r.str(), d.term_a, d.term_b, d.term_c,
                       d.total, d.term_a + d.term_b + d.term_c, d.bound_violations);
  }
  write_text_atomic(dir / "decomposition.csv", csv);

  json gap = "unavailable";
  const fs::path records_path = out_dir(cfg) / "eval" / "records.jsonl";
  if (fs::exists(records_path)) {
    std::vector<EvalRecord> t_recs, s_recs;
    for (auto& r : load_records(records_path)) {
      if (r.model_id == kTeacherId) t_recs.push_back(r);
      if (r.model_id == kStudentId) s_recs.push_back(r);
    }
    try {
      gap = sweet_spot_gap(t_recs, s_recs, eps).to_json();
    } catch (const ContractError& e) {
      spdlog::warn("sweet-spot gap unavailable: {}", e.what());
    }
  }
  write_json(dir / "decomposition.json",
             {{"surrogate", kProbeSurrogate}, {"epsilon_align", eps}, {"rows", rows}, {"sweet_spot_gap", gap}});
}

void cmd_ablate(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  const SubsetManifest manifest = eval_manifest(cfg);
  const Resolution res = eval_resolution(cfg);
  const RemapProtocol base = base_protocol(cfg);
  const fs::path root = out_dir(cfg) / "ablate";
  const std::set<std::string> known{"capacity", "interp", "loss"};
  for (std::size_t i = 0; i < cfg.ablate.studies.size(); ++i) {
    if (!known.count(cfg.ablate.studies[i])) {
      throw ConfigError(fmt::format("ablate.studies[{}]", i), "expected capacity|interp|loss");
    }
  }
  auto wants = [&](const std::string& s) {
    return std::find(cfg.ablate.studies.begin(), cfg.ablate.studies.end(), s) != cfg.ablate.studies.end();
  };
  auto eval_one = [&](const std::string& id, std::shared_ptr<const StudentEncoder> student, const RemapProtocol& proto,
                      double scale, const fs::path& records) {
    return single_record(sweep({student_sweep_model(id, student, teacher)}, manifest, {ScaleFactor(scale)}, proto,
                               sweep_options(cfg, res, records)),
                         id);
  };
  const int train_res = cfg.stages.empty() ? cfg.data.base_resolution : cfg.stages.back().resolution;

  if (wants("capacity")) {
    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < cfg.ablate.hidden.size(); ++i) {
      StudentConfig sc = cfg.student;
      sc.hidden = cfg.ablate.hidden[i];
      config_field(fmt::format("ablate.hidden[{}]", i), [&] { sc.validate(); return 0; });
      const std::string id = fmt::format("hidden_{}", sc.hidden);
      const auto student = ablation_student(cfg, sc, cfg.loss, teacher, root / "capacity" / id);
      ReportRow row = metrics_row(eval_one(id, student, base, 1.0, root / "capacity" / "records.jsonl"));
      row.labels = {{"resolution", std::to_string(train_res)},
                    {"hidden", std::to_string(sc.hidden)},
                    {"params", mb(parameter_footprint(student->parameter_count()).bytes_fp16) + "MB"}};
      rows.push_back(std::move(row));
    }
    write_table(render_table(rows, TableLayout::kTable2), root / "table2");
  }

  if (wants("interp")) {
    std::shared_ptr<const StudentEncoder> student;
    if (fs::exists(student_checkpoint_path(cfg))) {
      student = load_student_model(student_checkpoint_path(cfg));
    } else {
      student = ablation_student(cfg, cfg.student, cfg.loss, teacher, root / "interp" / "base");
    }
    const fs::path records = root / "interp" / "records.jsonl";
    std::vector<ReportRow> rows;
    RemapProtocol none = base;
    none.position = RemapPosition::kNone;
    ReportRow first = metrics_row(eval_one(kStudentId, student, none, cfg.ablate.interp_scale, records));
    first.labels = {{"method", "-"}, {"position", "-"}};
    rows.push_back(std::move(first));
    for (ResizeMethod m : {ResizeMethod::kNearest, ResizeMethod::kBilinear, ResizeMethod::kBicubic}) {
      for (RemapPosition p : {RemapPosition::kPre, RemapPosition::kPost}) {
        RemapProtocol proto = base;
        proto.method = m;
        proto.position = p;
        ReportRow row = metrics_row(eval_one(kStudentId, student, proto, cfg.ablate.interp_scale, records));
        row.labels = {{"method", std::string(to_string(m))}, {"position", std::string(to_string(p))}};
        rows.push_back(std::move(row));
      }
    }
    write_table(render_table(rows, TableLayout::kTable3), root / "table3");
  }

  if (wants("loss")) {
    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < cfg.ablate.losses.size(); ++i) {
      LossSpec spec = cfg.loss;
      spec.kind = config_field(fmt::format("ablate.losses[{}]", i), [&] { return loss_kind_from_string(cfg.ablate.losses[i]); });
      std::string id = cfg.ablate.losses[i];
      std::replace(id.begin(), id.end(), '+', '_');
      const fs::path dir = root / "loss" / id;
      const auto student = ablation_student(cfg, cfg.student, spec, teacher, dir);
      ReportRow row = metrics_row(eval_one(id, student, base, 1.0, root / "loss" / "records.jsonl"));
      row.labels = {{"loss", cfg.ablate.losses[i]},
                    {"hours", fmt::format("{:.4f}", training_hours(dir / "train_log.timing.jsonl"))}};
      rows.push_back(std::move(row));
    }
    write_table(render_table(rows, TableLayout::kTable4), root / "table4");
  }
}

void cmd_bench(const RunConfig& cfg) {
  ensure_dataset(cfg);
  const TeacherPtr teacher = build_teacher(cfg);
  const Resolution res = square_resolutions({cfg.bench.resolution}, "bench.resolution")[0];
  if (cfg.bench.warmup < 0) throw ConfigError("bench.warmup", "must be >= 0");
  const auto models = sweep_models(cfg, teacher);
  const fs::path dir = out_dir(cfg) / "bench";
  fs::create_directories(dir);

  // PSNR at scale 1 comes from its own persisted sweep so bench stays self-contained.
  const auto quality = sweep(models, eval_manifest(cfg), {ScaleFactor(1.0)}, base_protocol(cfg),
                             sweep_options(cfg, eval_resolution(cfg), dir / "psnr_records.jsonl"));

  std::map<std::string, std::size_t> counts{{kTeacherId, teacher->parameter_count()}};
  if (auto s = maybe_student(cfg)) counts[kStudentId] = s->parameter_count();
  if (fs::exists(scratch_checkpoint_path(cfg))) {
    counts[kScratchId] = AutoencoderModel::load(scratch_checkpoint_path(cfg))->parameter_count();
  }
  std::string jsonl;
  std::vector<ReportRow> rows;
  for (const auto& m : models) {
    const std::size_t params = counts.count(m.id) ? counts[m.id] : 0;
    const BenchRecord b = benchmark(m.id, m.encode, res, cfg.bench.n_iter, cfg.bench.warmup, params);
    jsonl += b.to_json().dump() + "\n";
    ReportRow row = metrics_row(single_record(quality, m.id));
    row.labels = {{"model", m.id},
                  {"t_infer", fmt::format("{:.2f}", b.ms_per_image)},
                  {"params", counts.count(m.id) ? mb(b.parameter_bytes) : "unavailable"},
                  {"mem", b.peak_accelerator_mb ? fmt::format("{:.1f}", *b.peak_accelerator_mb) : "unavailable"}};
    rows.push_back(std::move(row));
  }
  write_text_atomic(dir / "bench.jsonl", jsonl);
  write_table(render_table(rows, TableLayout::kTable5), dir / "table5");
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void cmd_report(const RunConfig& cfg) {
  const fs::path root = out_dir(cfg);
  std::string doc = "# Run report\n\n";
  doc += fmt::format("Output directory artifacts aggregated from persisted records. Seed {}.\n", cfg.seed);

  auto section = [&](const std::string& title, const std::vector<std::string>& files) {
    std::vector<std::string> present;
    for (const auto& f : files) {
      if (fs::exists(root / f)) present.push_back(f);
    }
    doc += "\n## " + title + "\n\n";
    if (present.empty()) {
      doc += "not run\n";
      return;
    }
    for (const auto& f : present) {
      doc += "- `" + f + "`\n";
    }
    for (const auto& f : present) {
      if (f.ends_with(".txt")) doc += "\n```\n" + read_text(root / f) + "```\n";
    }
  };
  std::vector<std::string> manifests;
  for (const auto& c : command_names()) {
    if (c != "report") manifests.push_back("manifest_" + c + ".json");
  }
  section("Run manifests", manifests);
  section("Distillation", {"distill_summary.json", "train_log.jsonl", "checkpoints/student_final.rdck",
                           "plots/distill_loss.svg"});
  section("From-scratch baseline", {"scratch_summary.json", "scratch_log.jsonl", "checkpoints/scratch_vae.rdae",
                                    "plots/scratch_loss.svg"});
  section("Cross-resolution sweep", {"eval/records.jsonl", "eval/sweet_spots.json", "eval/psnr_vs_scale.svg",
                                     "eval/mse_vs_scale.svg", "eval/table1.csv", "eval/table1.txt"});
  section("Latent analysis", {"analysis/latent_stats.json", "analysis/latent_mean.svg", "analysis/latent_std.svg",
                              "analysis/divergence.json", "analysis/divergence.svg", "analysis/embeddings.csv",
                              "analysis/embedding_summary.json", "analysis/embedding_2d.svg", "analysis/radial.svg",
                              "analysis/interpolation.json"});
  section("Error decomposition", {"probe/decomposition.json", "probe/decomposition.csv"});
  section("Ablations", {"ablate/table2.csv", "ablate/table2.txt", "ablate/table3.csv", "ablate/table3.txt",
                        "ablate/table4.csv", "ablate/table4.txt"});
  section("Efficiency", {"bench/bench.jsonl", "bench/table5.csv", "bench/table5.txt"});

  if (fs::exists(root / "eval" / "sweet_spots.json")) {
    doc += "\n## Sweet spots\n\n```\n" + read_text(root / "eval" / "sweet_spots.json") + "```\n";
  }
  write_text_atomic(root / "report.md", doc);
  spdlog::info("report written to {}", (root / "report.md").string());
}

using CommandFn = void (*)(const RunConfig&);

const std::vector<std::pair<std::string, CommandFn>>& commands() {
  static const std::vector<std::pair<std::string, CommandFn>> table{
      {"distill", cmd_distill},         {"train-scratch", cmd_train_scratch}, {"eval-sweep", cmd_eval_sweep},
      {"analyze-latents", cmd_analyze_latents}, {"probe-theory", cmd_probe_theory}, {"ablate", cmd_ablate},
      {"bench", cmd_bench},             {"report", cmd_report},               {"make-synthetic", cmd_make_synthetic}};
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : commands()) n.push_back(name);
    return n;
  }();
  return names;
}

void ensure_dataset(const RunConfig& cfg) {
  if (fs::exists(cfg.data.root)) return;
  if (cfg.data.synthetic_count <= 0) throw ConfigError("data.root", "directory does not exist: " + cfg.data.root);
  spdlog::info("generating synthetic dataset under {}", cfg.data.root);
  write_synthetic_dataset(cfg.data.root, cfg.data.synthetic_count, cfg.data.synthetic_resolution, cfg.seed);
}

TeacherPtr build_teacher(const RunConfig& cfg) {
  if (cfg.teacher.kind == "toy") {
    return make_toy_teacher(cfg.teacher.seed, resolution_bias_from_string(cfg.teacher.resolution_bias));
  }
  if (cfg.teacher.artifact_path.empty()) throw ConfigError("teacher.artifact_path", "required for external teachers");
  const auto ids = registered_adapters();
  if (std::find(ids.begin(), ids.end(), cfg.teacher.adapter_id) == ids.end()) {
    throw ConfigError("teacher.adapter_id", "unknown adapter '" + cfg.teacher.adapter_id + "'");
  }
  return load_external_teacher(cfg.teacher.artifact_path, cfg.teacher.adapter_id);
}

fs::path student_checkpoint_path(const RunConfig& cfg) {
  if (!cfg.eval.student_checkpoint.empty()) return cfg.eval.student_checkpoint;
  return out_dir(cfg) / "checkpoints" / "student_final.rdck";
}

SubsetManifest eval_manifest(const RunConfig& cfg) {
  const DatasetSpec spec = dataset_spec(cfg, Split::kVal);
  const fs::path path = out_dir(cfg) / "eval_subset.txt";
  if (fs::exists(path)) return SubsetManifest::load(path, spec.split_dir());
  SubsetManifest m = config_field("data.eval_subset_size", [&] { return make_eval_subset(spec); });
  m.save(path);
  return m;
}

void run_command(const std::string& command, const RunConfig& cfg) {
  const auto& table = commands();
  auto it = std::find_if(table.begin(), table.end(), [&](const auto& c) { return c.first == command; });
  if (it == table.end()) throw ConfigError("command", "unknown command '" + command + "'");
  if (cfg.device != "cpu") throw ConfigError("device", "only 'cpu' is available in this build, got '" + cfg.device + "'");
  seed_all(cfg.seed);
  fs::create_directories(out_dir(cfg));
  write_json(out_dir(cfg) / ("manifest_" + command + ".json"),
             {{"command", command}, {"seed", cfg.seed}, {"code_version", RDIST_VERSION}, {"config", to_json(cfg)}});
  it->second(cfg);
}

}  // namespace rdist::app
