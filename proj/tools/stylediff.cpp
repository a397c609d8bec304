// stylediff command-line tool.

#include "stylediff/stylediff.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace stylediff;
using json = nlohmann::ordered_json;

namespace {

std::string sha256_file(const fs::path& path) {
  const auto bytes = io::read_file(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("sha256 failed for " + path.string());
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

json kv_json(const KeyValueConfig& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

void write_losses_csv(const fs::path& path, const std::vector<double>& losses) {
  std::ostringstream os;
  os << "iteration,loss\n" << std::setprecision(9);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i + 1 << ',' << losses[i] << '\n';
  io::write_text_atomic(path, os.str());
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<fs::path> files_with_extensions(const fs::path& dir, std::initializer_list<const char*> exts) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    for (const char* x : exts)
      if (e.path().extension() == x) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// make-toy-data

struct ToyDataArgs {
  std::string output_dir;
  int subjects = 4;
  int clips = 4;
  int frames = 250;
  std::uint64_t seed = 5;
  int heldout_clips = 1;
};

int run_make_toy_data(const ToyDataArgs& a) {
  detail::require<ParameterError>(a.subjects >= 1 && a.clips >= 1 && a.frames >= 1 && a.heldout_clips >= 0,
                                  "make-toy-data: counts must be positive");
  const fs::path out = a.output_dir;
  const auto tpl = make_toy_template();
  const auto ds = make_toy_dataset(a.seed, a.subjects, a.clips, a.frames);
  save_dataset(out, ds);
  save_template(out / "template.ftpl", tpl);
  for (int s = 0; s < a.subjects; ++s)
    io::write_f32_dump(out / "betas" / ("s" + std::to_string(s) + ".f32"),
                       to_std(toy_subject_style(a.seed, s).beta));

  Dataset held;
  for (int s = 0; s < a.subjects; ++s) {
    for (int c = 0; c < a.heldout_clips; ++c) {
      auto clip = make_toy_clip(a.seed, s, 100 + c, a.frames);
      char id[32];
      std::snprintf(id, sizeof id, "s%02d_c%03d", s, 100 + c);
      write_wav(out / "heldout" / "audio" / (std::string(id) + ".wav"), clip.audio);
      held.manifest.clips.push_back({id, std::string(id) + ".sdc", clip.subject_id, a.frames, "test"});
      held.clips.push_back(std::move(clip));
    }
  }
  if (!held.clips.empty()) save_dataset(out / "heldout", held);
  log::info("toy dataset written")
      .kv("dir", out.string())
      .kv("clips", ds.clips.size())
      .kv("heldout", held.clips.size());
  return 0;
}

// ---------------------------------------------------------------------------
// train-style

struct TrainStyleArgs {
  std::string data, output_dir, config, split = "train";
  int iterations = 26000;
  int batch = 32;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  CLI::App* app = nullptr;
};

int run_train_style(const TrainStyleArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto kv = load_config(a.config);
  auto enc_cfg = StyleEncoderConfig::from_kv(kv);
  auto tc = StyleTrainConfig::from_kv(kv);
  if (a.app->count("--iterations")) tc.iterations = a.iterations;
  if (a.app->count("--batch")) tc.batch = a.batch;
  if (a.app->count("--lr")) tc.lr = a.lr;
  if (a.app->count("--seed")) tc.seed = a.seed;
  detail::require<ParameterError>(tc.iterations >= 0 && tc.batch >= 1 && tc.lr > 0, "train-style: bad schedule");

  const auto ds = load_dataset(a.data);
  const auto idx = ds.indices_in_split(a.split);
  if (idx.empty()) throw DataError("train-style: split '" + a.split + "' is empty");
  enc_cfg.motion_dim = static_cast<int>(ds.clips[idx.front()].motion.dim());
  enc_cfg.validate();

  StyleEncoder encoder(enc_cfg);
  const auto losses = train_style_encoder(encoder, ds, idx, tc);

  const fs::path out = a.output_dir;
  encoder.save(out / "style_encoder.sdck");
  write_losses_csv(out / "style_losses.csv", losses);
  json m;
  m["command"] = "train-style";
  m["data_manifest_sha256"] = sha256_file(fs::path(a.data) / "manifest.json");
  m["iterations"] = tc.iterations;
  m["batch"] = tc.batch;
  m["lr"] = tc.lr;
  m["seed"] = tc.seed;
  m["config"] = kv_json(enc_cfg.to_kv());
  m["first_loss"] = losses.empty() ? json() : json(losses.front());
  m["final_loss"] = losses.empty() ? json() : json(losses.back());
  m["seconds"] = seconds_since(t0);
  m["checkpoint_sha256"] = sha256_file(out / "style_encoder.sdck");
  io::write_text_atomic(out / "train_style_manifest.json", m.dump(2) + "\n");
  log::info("style encoder saved").kv("path", (out / "style_encoder.sdck").string());
  return 0;
}

// ---------------------------------------------------------------------------
// train-denoiser

struct TrainDenoiserArgs {
  std::string data, style_checkpoint, template_path, output_dir, config, encoder, split = "train";
  int iterations = 90000;
  int batch = 16;
  double lr = 1e-4;
  int warmup = 5000;
  std::uint64_t seed = 1;
  CLI::App* app = nullptr;
};

int run_train_denoiser(const TrainDenoiserArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto kv = load_config(a.config);
  auto tc = TrainConfig::from_kv(kv);
  if (a.app->count("--iterations")) tc.iterations = a.iterations;
  if (a.app->count("--batch")) tc.batch = a.batch;
  if (a.app->count("--lr")) tc.lr = a.lr;
  if (a.app->count("--warmup")) tc.warmup = a.warmup;
  if (a.app->count("--seed")) tc.seed = a.seed;
  tc.validate();

  const fs::path tpl_path = a.template_path.empty() ? fs::path(a.data) / "template.ftpl" : fs::path(a.template_path);
  const auto tpl = load_template(tpl_path);
  const auto style = StyleEncoder::load(a.style_checkpoint);
  const auto ds = load_dataset(a.data);
  const auto idx = ds.indices_in_split(a.split);
  if (idx.empty()) throw DataError("train-denoiser: split '" + a.split + "' is empty");

  const std::string kind = a.encoder.empty() ? default_encoder_kind() : a.encoder;
  auto speech = make_encoder(kind, kv);
  auto dc = DenoiserConfig::from_kv(kv);
  dc.motion_dim = tpl.motion_dim();
  dc.shape_dim = tpl.shape_dim();
  dc.audio_dim = speech->feature_dim();
  dc.style_dim = style.config().dim;
  if (!kv.has("denoiser.window")) dc.window = style.config().window;
  dc.validate();
  if (style.config().motion_dim != dc.motion_dim)
    throw CheckpointError("style encoder motion dimension does not match the template");

  StyleDiffModel model(dc, std::move(speech));
  const auto losses = train_denoiser(model, style, tpl, ds, idx, tc);

  const fs::path out = a.output_dir;
  model.save(out / "denoiser.sdck");
  write_losses_csv(out / "denoiser_losses.csv", losses);
  json m;
  m["command"] = "train-denoiser";
  m["data_manifest_sha256"] = sha256_file(fs::path(a.data) / "manifest.json");
  m["style_checkpoint_sha256"] = sha256_file(a.style_checkpoint);
  m["template_sha256"] = sha256_file(tpl_path);
  m["encoder"] = kind;
  m["iterations"] = tc.iterations;
  m["batch"] = tc.batch;
  m["lr"] = tc.lr;
  m["warmup"] = tc.warmup;
  m["seed"] = tc.seed;
  m["config"] = kv_json(model.config_kv());
  m["first_loss"] = losses.empty() ? json() : json(losses.front());
  m["final_loss"] = losses.empty() ? json() : json(losses.back());
  m["seconds"] = seconds_since(t0);
  m["checkpoint_sha256"] = sha256_file(out / "denoiser.sdck");
  io::write_text_atomic(out / "train_denoiser_manifest.json", m.dump(2) + "\n");
  log::info("denoiser saved").kv("path", (out / "denoiser.sdck").string());
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string audio, checkpoint, style_checkpoint, style_clip, style_embedding, beta, name, output_dir;
  std::uint64_t seed = 0;
  double wa = 1.15;
  double ws = 3.0;
  int frames = 0;
};

int run_generate(const GenerateArgs& a) {
  const fs::path audio_path = a.audio;
  AudioClip audio;
  std::optional<ClipRecord> source;
  Eigen::Index frames = 0;
  if (audio_path.extension() == ".sdc") {
    source = load_clip(audio_path);
    audio = source->audio;
    frames = source->motion.length();
  } else if (audio_path.extension() == ".wav") {
    audio = read_wav(audio_path);
  } else {
    audio = {io::read_f32_dump(audio_path), kCanonicalSampleRate};
  }
  if (audio.samples.empty()) throw InputError("generate: audio is empty");
  if (frames == 0) frames = frames_for_audio(audio);
  if (a.frames > 0) frames = a.frames;

  Vector beta;
  if (!a.beta.empty())
    beta = to_eigen(io::read_f32_dump(a.beta));
  else if (source)
    beta = source->beta;
  else
    throw InputError("generate: --beta is required unless --audio is a clip container");

  const auto model = StyleDiffModel::load(a.checkpoint);
  if (beta.size() != model.config().shape_dim)
    throw InputError("generate: beta has " + std::to_string(beta.size()) + " values, model expects " +
                     std::to_string(model.config().shape_dim));

  std::optional<RowVector> style;
  if (!a.style_embedding.empty()) {
    const auto v = io::read_f32_dump(a.style_embedding);
    if (static_cast<int>(v.size()) != model.config().style_dim)
      throw InputError("generate: style embedding has wrong dimension");
    style = to_eigen(v).transpose();
  } else if (!a.style_clip.empty()) {
    if (a.style_checkpoint.empty()) throw ParameterError("generate: --style-clip needs --style-checkpoint");
    const auto enc = StyleEncoder::load(a.style_checkpoint);
    if (enc.config().dim != model.config().style_dim)
      throw CheckpointError("generate: style encoder and denoiser disagree on the style dimension");
    style = enc.encode_style(load_clip(a.style_clip).motion.frames);
  }

  GenerateOptions opts;
  opts.guidance = {a.wa, a.ws};
  opts.seed = a.seed;
  const auto motion = generate(model, audio, beta, style, frames, opts);

  const std::string name = a.name.empty() ? audio_path.stem().string() : a.name;
  const fs::path out = a.output_dir;
  ClipRecord rec;
  rec.beta = beta;
  rec.audio = audio;
  rec.motion = motion;
  save_clip(out / (name + ".sdc"), rec);
  if (style) io::write_f32_dump(out / (name + ".style.f32"), to_std(style->transpose()));

  json m;
  m["command"] = "generate";
  m["name"] = name;
  m["audio_sha256"] = sha256_file(audio_path);
  m["checkpoint_sha256"] = sha256_file(a.checkpoint);
  if (!a.style_checkpoint.empty()) m["style_checkpoint_sha256"] = sha256_file(a.style_checkpoint);
  if (!a.style_clip.empty()) m["style_clip_sha256"] = sha256_file(a.style_clip);
  if (!a.style_embedding.empty()) m["style_embedding_sha256"] = sha256_file(a.style_embedding);
  m["style"] = style ? "conditioned" : "null";
  m["seed"] = a.seed;
  m["audio_scale"] = a.wa;
  m["style_scale"] = a.ws;
  m["frames"] = frames;
  m["output_sha256"] = sha256_file(out / (name + ".sdc"));
  io::write_text_atomic(out / (name + ".generate_manifest.json"), m.dump(2) + "\n");
  log::info("motion generated").kv("path", (out / (name + ".sdc")).string()).kv("frames", frames);
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::vector<std::string> pred;
  std::string gt, template_path, output_dir;
  int jobs = 1;
};

struct Sequence {
  std::optional<ClipRecord> clip;
  std::optional<MeshSequence> mesh;
};

Sequence load_sequence(const fs::path& p) {
  Sequence s;
  if (p.extension() == ".sdc")
    s.clip = load_clip(p);
  else
    s.mesh = load_mesh_sequence(p);
  return s;
}

std::map<std::string, fs::path> sequences_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : files_with_extensions(dir, {".sdc", ".sdms"})) {
    if (!out.emplace(p.stem().string(), p).second)
      throw InputError("evaluate: duplicate sequence name " + p.stem().string() + " in " + dir.string());
  }
  return out;
}

struct ClipResult {
  std::string id;
  metrics::EvalReport report;
};

metrics::EvalReport evaluate_pair(const FaceTemplate& tpl, const Sequence& pred, const Sequence& gt) {
  if (pred.clip && gt.clip) {
    if (pred.clip->motion.length() != gt.clip->motion.length())
      throw DataError("evaluate: prediction and ground truth differ in length");
    return metrics::evaluate_motion(tpl, gt.clip->beta, pred.clip->motion, gt.clip->motion);
  }
  const Vector beta = gt.clip ? gt.clip->beta : pred.clip ? pred.clip->beta : Vector::Zero(tpl.shape_dim());
  auto as_mesh = [&](const Sequence& s) {
    return s.mesh ? *s.mesh : zero_pose_mesh_sequence(tpl, beta, s.clip->motion);
  };
  const auto mp = as_mesh(pred);
  const auto mg = as_mesh(gt);
  if (mp.frames() != mg.frames() || mp.vertex_count() != mg.vertex_count())
    throw DataError("evaluate: prediction and ground truth meshes differ in shape");
  const Matrix neutral = construct_mesh(tpl, beta, MotionParams::zero(tpl.expression_dim()));
  return metrics::evaluate_meshes(tpl, neutral, mp, mg);
}

template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> threads;
  for (int t = 1; t < count; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

int run_evaluate(const EvaluateArgs& a) {
  detail::require<ParameterError>(a.jobs >= 1, "evaluate: --jobs must be >= 1");
  const auto tpl = load_template(a.template_path);
  const auto gt = sequences_by_stem(a.gt);
  std::vector<std::map<std::string, fs::path>> preds;
  for (const auto& d : a.pred) preds.push_back(sequences_by_stem(d));

  std::vector<std::string> ids;
  for (const auto& [stem, path] : preds.front())
    if (gt.count(stem)) ids.push_back(stem);
  if (ids.empty()) throw InputError("evaluate: no prediction matches a ground-truth sequence by name");

  std::vector<ClipResult> results(ids.size());
  parallel_for(ids.size(), a.jobs, [&](std::size_t i) {
    const auto& id = ids[i];
    const auto g = load_sequence(gt.at(id));
    results[i] = {id, evaluate_pair(tpl, load_sequence(preds.front().at(id)), g)};
    if (preds.size() < 2) return;
    std::vector<Matrix> samples;
    for (const auto& p : preds) {
      const auto it = p.find(id);
      if (it == p.end()) return;
      const auto s = load_sequence(it->second);
      if (!s.clip) return;
      samples.push_back(s.clip->motion.frames);
    }
    results[i].report.div_exp = metrics::diversity(samples, metrics::expression_dims(tpl));
    results[i].report.div_hp = metrics::diversity(samples, metrics::head_pose_dims(tpl));
  });

  auto mean_of = [&](auto get) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results) {
      const std::optional<double> v = get(r.report);
      if (v) sum += *v, ++n;
    }
    return n ? std::optional<double>(sum / n) : std::nullopt;
  };
  metrics::EvalReport mean;
  mean.lve_mm = *mean_of([](const auto& r) { return std::optional<double>(r.lve_mm); });
  mean.fdd_1e5m = *mean_of([](const auto& r) { return std::optional<double>(r.fdd_1e5m); });
  mean.mod_mm = *mean_of([](const auto& r) { return std::optional<double>(r.mod_mm); });
  mean.ba = mean_of([](const auto& r) { return r.ba; });
  mean.div_exp = mean_of([](const auto& r) { return r.div_exp; });
  mean.div_hp = mean_of([](const auto& r) { return r.div_hp; });

  auto row = [](const metrics::EvalReport& r) {
    return json{{"lve_mm", r.lve_mm},         {"fdd_1e5m", r.fdd_1e5m},         {"mod_mm", r.mod_mm},
                {"ba", optional_json(r.ba)}, {"div_exp", optional_json(r.div_exp)}, {"div_hp", optional_json(r.div_hp)}};
  };
  json j;
  j["clips"] = json::array();
  for (const auto& r : results) {
    json c = {{"id", r.id}};
    c.update(row(r.report));
    j["clips"].push_back(c);
  }
  j["mean"] = row(mean);
  j["count"] = results.size();

  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream os;
    os << std::setprecision(9) << *v;
    return os.str();
  };
  std::ostringstream csv;
  csv << "id,lve_mm,fdd_1e5m,mod_mm,ba,div_exp,div_hp\n";
  auto csv_row = [&](const std::string& id, const metrics::EvalReport& r) {
    csv << id << ',' << cell(r.lve_mm) << ',' << cell(r.fdd_1e5m) << ',' << cell(r.mod_mm) << ',' << cell(r.ba) << ','
        << cell(r.div_exp) << ',' << cell(r.div_hp) << '\n';
  };
  for (const auto& r : results) csv_row(r.id, r.report);
  csv_row("mean", mean);

  const fs::path out = a.output_dir;
  io::write_text_atomic(out / "report.json", j.dump(2) + "\n");
  io::write_text_atomic(out / "report.csv", csv.str());
  log::info("evaluation written").kv("clips", results.size()).kv("lve_mm", mean.lve_mm).kv("mod_mm", mean.mod_mm);
  return 0;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string input, output_dir;
  int motion_dim = 56;
  bool no_smooth = false;
  int smooth_window = 9;
  int smooth_order = 2;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
};

/// Input layout: <input>/<subject>/beta.f32 plus <clip>.wav and <clip>.f32
/// (T x D_x row-major motion) per clip.
int run_ingest(const IngestArgs& a) {
  detail::require<ParameterError>(a.motion_dim >= 7, "ingest: --motion-dim must be at least 7");
  const fs::path in = a.input;
  if (!fs::is_directory(in)) throw InputError("ingest: not a directory: " + in.string());
  std::vector<fs::path> subjects;
  for (const auto& e : fs::directory_iterator(in))
    if (e.is_directory()) subjects.push_back(e.path());
  std::sort(subjects.begin(), subjects.end());

  Dataset ds;
  std::vector<std::string> names;
  int beta_dim = -1;
  for (const auto& dir : subjects) {
    const std::string subject = dir.filename().string();
    const auto beta = to_eigen(io::read_f32_dump(dir / "beta.f32"));
    if (beta_dim < 0) beta_dim = static_cast<int>(beta.size());
    for (const auto& wav : files_with_extensions(dir, {".wav"})) {
      const auto motion_path = fs::path(wav).replace_extension(".f32");
      const auto raw = io::read_f32_dump(motion_path);
      if (raw.empty() || raw.size() % static_cast<std::size_t>(a.motion_dim) != 0)
        throw DataError(motion_path.string() + ": size is not a multiple of the motion dimension");
      ClipRecord clip;
      clip.subject_id = subject;
      clip.beta = beta;
      clip.audio = read_wav(wav);
      const auto T = static_cast<Eigen::Index>(raw.size()) / a.motion_dim;
      clip.motion.frames = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          raw.data(), T, a.motion_dim);
      if (!a.no_smooth) {
        const auto smoothed = savitzky_golay_smooth(clip.motion, a.smooth_window, a.smooth_order);
        const int de = a.motion_dim - 6;
        clip.motion.frames.leftCols(de) = smoothed.frames.leftCols(de);
      }
      validate_clip(clip, beta_dim, a.motion_dim);
      const std::string id = subject + "_" + wav.stem().string();
      ds.manifest.clips.push_back({id, id + ".sdc", subject, static_cast<int>(T), "train"});
      ds.clips.push_back(std::move(clip));
      names.push_back(subject);
    }
  }
  if (ds.clips.empty()) throw DataError("ingest: no clips found under " + in.string());
  const auto splits = assign_splits_by_subject(names, a.val_fraction, a.test_fraction, a.split_seed);
  for (auto& e : ds.manifest.clips) e.split = splits.at(e.subject);
  save_dataset(a.output_dir, ds);
  log::info("dataset ingested").kv("clips", ds.clips.size()).kv("subjects", subjects.size());
  return 0;
}

// ---------------------------------------------------------------------------
// export-obj

struct ExportArgs {
  std::string input, template_path, output_dir;
  bool zero_pose = false;
};

int run_export_obj(const ExportArgs& a) {
  const auto tpl = load_template(a.template_path);
  const fs::path in = a.input;
  MeshSequence mesh;
  if (in.extension() == ".sdc") {
    const auto clip = load_clip(in);
    mesh = mesh_sequence(tpl, clip.beta, clip.motion, a.zero_pose);
  } else {
    mesh = load_mesh_sequence(in);
  }
  const int n = export_obj_sequence(a.output_dir, tpl, mesh);
  log::info("obj sequence written").kv("frames", n).kv("dir", a.output_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-driven 3D face and head motion generation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  ToyDataArgs toy;
  auto* cmd_toy = app.add_subcommand("make-toy-data", "Write the synthetic toy dataset");
  cmd_toy->add_option("--output-dir", toy.output_dir, "Output directory")->required();
  cmd_toy->add_option("--subjects", toy.subjects, "Number of subjects");
  cmd_toy->add_option("--clips", toy.clips, "Training clips per subject");
  cmd_toy->add_option("--frames", toy.frames, "Frames per clip");
  cmd_toy->add_option("--seed", toy.seed, "Dataset seed");
  cmd_toy->add_option("--heldout-clips", toy.heldout_clips, "Held-out clips per subject");

  TrainStyleArgs ts;
  auto* cmd_ts = app.add_subcommand("train-style", "Train the contrastive style encoder");
  ts.app = cmd_ts;
  cmd_ts->add_option("--data", ts.data, "Dataset directory")->required()
      ->check(CLI::ExistingDirectory);
  cmd_ts->add_option("--output-dir", ts.output_dir, "Output directory")->required();
  cmd_ts->add_option("--config", ts.config, "Key=value config file (style.*, style_train.*)")
      ->check(CLI::ExistingFile);
  cmd_ts->add_option("--split", ts.split, "Manifest split to train on");
  cmd_ts->add_option("--iterations", ts.iterations, "Training iterations");
  cmd_ts->add_option("--batch", ts.batch, "Windows per batch");
  cmd_ts->add_option("--lr", ts.lr, "Adam learning rate");
  cmd_ts->add_option("--seed", ts.seed, "Sampling seed");

  TrainDenoiserArgs td;
  auto* cmd_td = app.add_subcommand("train-denoiser", "Train the diffusion denoiser and speech encoder");
  td.app = cmd_td;
  cmd_td->add_option("--data", td.data, "Dataset directory")->required()
      ->check(CLI::ExistingDirectory);
  cmd_td->add_option("--style-checkpoint", td.style_checkpoint, "Trained style encoder")->required()
      ->check(CLI::ExistingFile);
  cmd_td->add_option("--template", td.template_path, "Face template (default <data>/template.ftpl)")
      ->check(CLI::ExistingFile);
  cmd_td->add_option("--output-dir", td.output_dir, "Output directory")->required();
  cmd_td->add_option("--config", td.config, "Key=value config file (denoiser.*, audio.*, train.*, loss.*)")
      ->check(CLI::ExistingFile);
  cmd_td->add_option("--encoder", td.encoder, "Speech encoder: toy or pretrained (default $STYLEDIFF_ENCODER, else toy)")
      ->check(CLI::IsMember({"toy", "pretrained"}));
  cmd_td->add_option("--split", td.split, "Manifest split to train on");
  cmd_td->add_option("--iterations", td.iterations, "Training iterations");
  cmd_td->add_option("--batch", td.batch, "Samples per batch");
  cmd_td->add_option("--lr", td.lr, "Adam learning rate");
  cmd_td->add_option("--warmup", td.warmup, "Linear warm-up steps");
  cmd_td->add_option("--seed", td.seed, "Training seed");

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "Generate motion for an audio clip");
  cmd_gen->add_option("--audio", gen.audio, "Speech: .wav, .sdc clip, or raw f32 samples at 16 kHz")->required()
      ->check(CLI::ExistingFile);
  cmd_gen->add_option("--checkpoint", gen.checkpoint, "Trained denoiser checkpoint")->required()
      ->check(CLI::ExistingFile);
  cmd_gen->add_option("--style-checkpoint", gen.style_checkpoint, "Style encoder checkpoint (for --style-clip)")
      ->check(CLI::ExistingFile);
  auto* style_clip =
      cmd_gen->add_option("--style-clip", gen.style_clip, "Reference clip whose motion defines the style")
          ->check(CLI::ExistingFile);
  cmd_gen->add_option("--style-embedding", gen.style_embedding, "Precomputed style embedding (f32 dump)")
      ->excludes(style_clip)
      ->check(CLI::ExistingFile);
  cmd_gen->add_option("--beta", gen.beta, "Shape parameters (f32 dump); default from an .sdc audio input")
      ->check(CLI::ExistingFile);
  cmd_gen->add_option("--seed", gen.seed, "Sampling seed");
  cmd_gen->add_option("--wa", gen.wa, "Speech guidance scale");
  cmd_gen->add_option("--ws", gen.ws, "Style guidance scale");
  cmd_gen->add_option("--frames", gen.frames, "Frames to generate (0: match the audio)");
  cmd_gen->add_option("--name", gen.name, "Output name (default: audio file stem)");
  cmd_gen->add_option("--output-dir", gen.output_dir, "Output directory")->required();

  EvaluateArgs ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Compare generated and ground-truth sequences");
  cmd_ev->add_option("--pred", ev.pred, "Prediction directory; repeat for diversity across samples")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_ev->add_option("--gt", ev.gt, "Ground-truth directory")->required()
      ->check(CLI::ExistingDirectory);
  cmd_ev->add_option("--template", ev.template_path, "Face template")->required()
      ->check(CLI::ExistingFile);
  cmd_ev->add_option("--jobs", ev.jobs, "Worker threads");
  cmd_ev->add_option("--output-dir", ev.output_dir, "Output directory")->required();

  IngestArgs ing;
  auto* cmd_ing = app.add_subcommand("ingest", "Convert raw f32 motion and WAV audio into a dataset");
  cmd_ing->add_option("--input", ing.input, "Input directory of <subject>/ folders")->required()
      ->check(CLI::ExistingDirectory);
  cmd_ing->add_option("--output-dir", ing.output_dir, "Output dataset directory")->required();
  cmd_ing->add_option("--motion-dim", ing.motion_dim, "Motion parameters per frame");
  cmd_ing->add_flag("--no-smooth", ing.no_smooth, "Skip expression smoothing");
  cmd_ing->add_option("--smooth-window", ing.smooth_window, "Savitzky-Golay window");
  cmd_ing->add_option("--smooth-order", ing.smooth_order, "Savitzky-Golay polynomial order");
  cmd_ing->add_option("--val-fraction", ing.val_fraction, "Fraction of subjects for validation");
  cmd_ing->add_option("--test-fraction", ing.test_fraction, "Fraction of subjects for test");
  cmd_ing->add_option("--split-seed", ing.split_seed, "Subject shuffle seed");

  ExportArgs ex;
  auto* cmd_ex = app.add_subcommand("export-obj", "Write per-frame OBJ meshes");
  cmd_ex->add_option("--input", ex.input, "Motion clip (.sdc) or mesh sequence (.sdms)")->required()
      ->check(CLI::ExistingFile);
  cmd_ex->add_option("--template", ex.template_path, "Face template")->required()
      ->check(CLI::ExistingFile);
  cmd_ex->add_option("--output-dir", ex.output_dir, "Output directory")->required();
  cmd_ex->add_flag("--zero-pose", ex.zero_pose, "Drop the global head rotation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (quiet) log::threshold() = log::Level::warning;

  try {
    if (cmd_toy->parsed()) return run_make_toy_data(toy);
    if (cmd_ts->parsed()) return run_train_style(ts);
    if (cmd_td->parsed()) return run_train_denoiser(td);
    if (cmd_gen->parsed()) return run_generate(gen);
    if (cmd_ev->parsed()) return run_evaluate(ev);
    if (cmd_ing->parsed()) return run_ingest(ing);
    if (cmd_ex->parsed()) return run_export_obj(ex);
  } catch (const ParameterError& e) {
    log::error(e.what());
    return 2;
  } catch (const InputError& e) {
    log::error(e.what());
    return 2;
  } catch (const DataError& e) {
    log::error(e.what());
    return 3;
  } catch (const CheckpointError& e) {
    log::error(e.what());
    return 4;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 2;
}
