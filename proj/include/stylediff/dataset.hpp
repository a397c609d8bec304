#pragma once

// Clip containers, manifests, smoothing, training-window sampling and the
// synthetic toy corpus.
//
// Clip file ("SDC1", little-endian):
//   char[4] magic, u32 version (= 1), u32 D_beta, u32 D_x, u32 T,
//   u32 audio sample count, u32 sample rate,
//   f32 beta[D_beta], f32 motion[T*D_x] (row-major), f32 audio[count]

#include "stylediff/audio_features.hpp"
#include "stylediff/core/binary_io.hpp"
#include "stylediff/core/log.hpp"
#include "stylediff/face_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

namespace stylediff {

struct ClipRecord {
  std::string subject_id;
  Vector beta;
  AudioClip audio;
  MotionSequence motion;
};

// ---------------------------------------------------------------------------
// Clip container

inline std::vector<char> serialize_clip(const ClipRecord& clip) {
  io::ByteWriter w;
  w.magic("SDC1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(clip.beta.size()));
  w.u32(static_cast<std::uint32_t>(clip.motion.dim()));
  w.u32(static_cast<std::uint32_t>(clip.motion.length()));
  w.u32(static_cast<std::uint32_t>(clip.audio.samples.size()));
  w.u32(static_cast<std::uint32_t>(clip.audio.sample_rate));
  w.f32_array(clip.beta.transpose());
  w.f32_array(clip.motion.frames);
  w.f32_span(clip.audio.samples);
  return w.bytes();
}

inline ClipRecord deserialize_clip(std::vector<char> bytes, const std::string& what = "clip") {
  io::ByteReader r(std::move(bytes), what);
  r.expect_magic("SDC1");
  if (const auto version = r.u32(); version != 1)
    throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto db = r.u32();
  const auto dx = r.u32();
  const auto t = r.u32();
  const auto n_audio = r.u32();
  const auto rate = r.u32();
  ClipRecord clip;
  clip.beta = r.f32_matrix(1, db).row(0).transpose();
  clip.motion.frames = r.f32_matrix(t, dx);
  clip.audio.samples = r.f32_vector(n_audio);
  clip.audio.sample_rate = static_cast<int>(rate);
  if (!r.at_end()) throw DataError(what + ": trailing bytes");
  return clip;
}

inline void save_clip(const std::filesystem::path& path, const ClipRecord& clip) {
  io::write_file_atomic(path, serialize_clip(clip));
}

inline ClipRecord load_clip(const std::filesystem::path& path) {
  return deserialize_clip(io::read_file(path), path.string());
}

/// Ingestion-time checks. Axis-angle magnitudes must stay below pi; noisy
/// diffusion states are never passed through here.
inline void validate_clip(const ClipRecord& clip, int expected_beta = -1, int expected_dx = -1) {
  auto fail = [](const std::string& m) { throw DataError("clip: " + m); };
  if (clip.motion.length() < 1) fail("motion has no frames");
  if (clip.motion.dim() < 6) fail("motion dimension below 6");
  if (expected_beta >= 0 && clip.beta.size() != expected_beta) fail("beta dimension mismatch");
  if (expected_dx >= 0 && clip.motion.dim() != expected_dx) fail("motion dimension mismatch");
  if (!clip.beta.allFinite()) fail("non-finite beta");
  if (!clip.motion.frames.allFinite()) fail("non-finite motion");
  const auto dx = clip.motion.dim();
  for (Eigen::Index t = 0; t < clip.motion.length(); ++t) {
    if (clip.motion.frames.row(t).segment(dx - 6, 3).norm() >= std::numbers::pi ||
        clip.motion.frames.row(t).tail(3).norm() >= std::numbers::pi)
      fail("axis-angle magnitude >= pi at frame " + std::to_string(t));
  }
  if (!clip.audio.samples.empty()) {
    if (clip.audio.sample_rate <= 0) fail("non-positive sample rate");
    const double expected = clip.audio.duration() * kMotionFrameRate;
    if (std::abs(expected - static_cast<double>(clip.motion.length())) > 1.0)
      fail("motion length " + std::to_string(clip.motion.length()) + " does not match audio duration (" +
           std::to_string(expected) + " frames)");
  }
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string id;
  std::string file;
  std::string subject;
  int frames = 0;
  std::string split = "train";
};

struct DatasetManifest {
  std::vector<ManifestEntry> clips;

  /// Splits must partition subjects: no subject may appear in two splits.
  void validate() const {
    std::map<std::string, std::string> split_of;
    std::set<std::string> ids;
    for (const auto& e : clips) {
      if (e.split != "train" && e.split != "val" && e.split != "test")
        throw DataError("manifest: unknown split '" + e.split + "' for clip " + e.id);
      if (!ids.insert(e.id).second) throw DataError("manifest: duplicate clip id " + e.id);
      auto [it, inserted] = split_of.emplace(e.subject, e.split);
      if (!inserted && it->second != e.split)
        throw DataError("manifest: subject " + e.subject + " appears in splits " + it->second + " and " + e.split);
    }
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["clips"] = nlohmann::ordered_json::array();
    for (const auto& e : clips)
      j["clips"].push_back(
          {{"id", e.id}, {"file", e.file}, {"subject", e.subject}, {"frames", e.frames}, {"split", e.split}});
    return j.dump(2) + "\n";
  }

  static DatasetManifest from_json(const std::string& text) {
    DatasetManifest m;
    try {
      const auto j = nlohmann::json::parse(text);
      for (const auto& c : j.at("clips"))
        m.clips.push_back({c.at("id").get<std::string>(), c.at("file").get<std::string>(),
                           c.at("subject").get<std::string>(), c.at("frames").get<int>(),
                           c.at("split").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
  }
};

/// Assigns whole subjects to splits. Subjects are shuffled with the seed and
/// the first val/test fractions (rounded) go to val and test.
inline std::map<std::string, std::string> assign_splits_by_subject(std::vector<std::string> subjects,
                                                                   double val_fraction, double test_fraction,
                                                                   std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  Rng rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng.engine());
  const auto n = subjects.size();
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out[subjects[i]] = i < n_val ? "val" : (i < n_val + n_test ? "test" : "train");
  return out;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<ClipRecord> clips;  // parallel to manifest.clips

  std::vector<std::size_t> indices_in_split(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (manifest.clips[i].split == split) out.push_back(i);
    return out;
  }
};

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.manifest.validate();
  for (std::size_t i = 0; i < ds.clips.size(); ++i) save_clip(dir / ds.manifest.clips[i].file, ds.clips[i]);
  io::write_text_atomic(dir / "manifest.json", ds.manifest.to_json());
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto bytes = io::read_file(dir / "manifest.json");
  Dataset ds;
  ds.manifest = DatasetManifest::from_json(std::string(bytes.begin(), bytes.end()));
  for (const auto& e : ds.manifest.clips) {
    auto clip = load_clip(dir / e.file);
    clip.subject_id = e.subject;
    if (clip.motion.length() != e.frames)
      throw DataError("clip " + e.id + ": manifest frame count disagrees with file");
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Savitzky-Golay smoothing

/// Smoothing weights of a centred least-squares polynomial fit: the first row
/// of (A^T A)^-1 A^T with A_ij = (i - m)^j.
inline Vector savitzky_golay_coefficients(int window, int polyorder) {
  detail::require<ParameterError>(window >= 1 && window % 2 == 1, "savitzky_golay: window must be odd");
  detail::require<ParameterError>(polyorder >= 0 && polyorder < window, "savitzky_golay: need polyorder < window");
  const int m = window / 2;
  Eigen::MatrixXd A(window, polyorder + 1);
  for (int i = 0; i < window; ++i)
    for (int j = 0; j <= polyorder; ++j) A(i, j) = std::pow(static_cast<double>(i - m), j);
  const Eigen::MatrixXd pinv = (A.transpose() * A).ldlt().solve(A.transpose());
  return pinv.row(0).transpose();
}

/// Mirror index reflection about the end samples (d c b | a b c d | c b a).
inline Eigen::Index mirror_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Per-dimension Savitzky-Golay filter with mirror boundaries. Sequences
/// shorter than the window are returned unchanged.
inline MotionSequence savitzky_golay_smooth(const MotionSequence& X, int window = 9, int polyorder = 2) {
  const Vector c = savitzky_golay_coefficients(window, polyorder);
  const auto T = X.length();
  if (T < window) {
    log::warning("sequence shorter than smoothing window; left unsmoothed").kv("frames", T).kv("window", window);
    return X;
  }
  const int m = window / 2;
  MotionSequence out{Matrix::Zero(T, X.dim()), X.frame_rate};
  for (Eigen::Index t = 0; t < T; ++t)
    for (int i = 0; i < window; ++i) out.frames.row(t) += c(i) * X.frames.row(mirror_index(t + i - m, T));
  return out;
}

// ---------------------------------------------------------------------------
// Training windows

struct WindowSample {
  std::size_t clip_index = 0;
  Eigen::Index offset = 0;
  Vector beta;
  AudioClip audio;  // samples spanning exactly the window
  Matrix motion;    // length x D_x
};

/// Audio samples covering motion frames [offset, offset + length), padded
/// with silence if the recording ends early.
inline AudioClip audio_segment(const AudioClip& audio, Eigen::Index offset, Eigen::Index length) {
  const double per_frame = audio.sample_rate / kMotionFrameRate;
  const auto begin = static_cast<std::size_t>(std::llround(offset * per_frame));
  const auto count = static_cast<std::size_t>(std::llround(length * per_frame));
  AudioClip seg{std::vector<double>(count, 0.0), audio.sample_rate};
  for (std::size_t i = 0; i < count && begin + i < audio.samples.size(); ++i) seg.samples[i] = audio.samples[begin + i];
  return seg;
}

/// Uniform over eligible clips (at least `length` frames), then uniform over
/// start offsets. Speech stays raw audio; encoding happens in the consumer.
class WindowSampler {
 public:
  WindowSampler(const Dataset& ds, std::vector<std::size_t> candidates, Eigen::Index length, std::uint64_t seed)
      : ds_(ds), length_(length), rng_(seed) {
    for (auto i : candidates) {
      if (ds.clips[i].motion.length() >= length)
        eligible_.push_back(i);
      else
        log::warning("clip shorter than training window skipped").kv("clip", ds.manifest.clips[i].id);
    }
    if (eligible_.empty())
      throw DataError("no clip has at least " + std::to_string(length) + " frames for window sampling");
  }

  WindowSample next() {
    const auto clip_index = eligible_[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(eligible_.size()) - 1))];
    const auto& clip = ds_.clips[clip_index];
    const auto offset = static_cast<Eigen::Index>(rng_.uniform_int(0, static_cast<int>(clip.motion.length() - length_)));
    return {clip_index, offset, clip.beta, audio_segment(clip.audio, offset, length_),
            clip.motion.frames.middleRows(offset, length_)};
  }

  std::vector<WindowSample> batch(int n) {
    std::vector<WindowSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

  const std::vector<std::size_t>& eligible() const { return eligible_; }

 private:
  const Dataset& ds_;
  Eigen::Index length_;
  Rng rng_;
  std::vector<std::size_t> eligible_;
};

// ---------------------------------------------------------------------------
// Toy corpus

/// Per-subject generator parameters; distinct subjects get distinct jaw
/// amplitudes (golden-ratio spacing), hence distinct mouth openings.
struct ToySubjectStyle {
  double jaw_offset = 0.0;
  double jaw_amplitude = 0.0;
  double lip_gain = 0.0;
  Vector expression_offset;
  double expression_amplitude = 0.0;
  double pose_amplitude = 0.0;
  double pose_frequency = 0.0;
  Vector beta;
};

inline ToySubjectStyle toy_subject_style(std::uint64_t seed, int subject, int shape_dim = 8, int expression_dim = 6) {
  Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(subject) * 7919ULL + 17ULL);
  const double frac = std::fmod(0.1 + subject * 0.6180339887498949, 1.0);
  ToySubjectStyle s;
  s.jaw_offset = 0.02 + 0.03 * rng.uniform();
  s.jaw_amplitude = 0.08 + 0.22 * frac;
  s.lip_gain = 0.5 + 1.5 * frac;
  s.expression_offset = Vector::Zero(expression_dim);
  for (int k = 1; k < expression_dim; ++k) s.expression_offset(k) = 1.2 * (rng.uniform() - 0.5);
  s.expression_amplitude = 0.2 + 0.8 * std::fmod(frac + 0.37, 1.0);
  s.pose_amplitude = 0.03 + 0.12 * std::fmod(frac + 0.71, 1.0);
  s.pose_frequency = 0.3 + 0.9 * rng.uniform();
  s.beta = Vector::NullaryExpr(shape_dim, [&] { return rng.normal(); });
  return s;
}

/// Speech-like syllable envelope in [0, 1] sampled at `rate` Hz.
inline std::vector<double> toy_envelope(Rng& rng, std::size_t samples, double rate) {
  std::vector<double> env(samples, 0.0);
  const double duration = static_cast<double>(samples) / rate;
  double t = 0.05 + 0.1 * rng.uniform();
  while (t < duration) {
    const double width = 0.12 + 0.13 * rng.uniform();
    const double amp = 0.5 + 0.5 * rng.uniform();
    const auto b = static_cast<std::ptrdiff_t>(t * rate);
    const auto e = static_cast<std::ptrdiff_t>((t + width) * rate);
    for (auto i = std::max<std::ptrdiff_t>(b, 0); i < std::min<std::ptrdiff_t>(e, static_cast<std::ptrdiff_t>(samples)); ++i) {
      const double u = static_cast<double>(i - b) / static_cast<double>(e - b);
      env[static_cast<std::size_t>(i)] = std::max(env[static_cast<std::size_t>(i)], amp * std::sin(std::numbers::pi * u));
    }
    t += width + 0.03 + 0.12 * rng.uniform();
    if (rng.uniform() < 0.15) t += 0.3 + 0.3 * rng.uniform();
  }
  return env;
}

/// Smooth zero-mean random signal: a few random low-frequency sinusoids.
inline Vector toy_smooth_signal(Rng& rng, Eigen::Index frames, double max_hz) {
  Vector s = Vector::Zero(frames);
  for (int k = 0; k < 3; ++k) {
    const double f = 0.2 + (max_hz - 0.2) * rng.uniform();
    const double ph = 2.0 * std::numbers::pi * rng.uniform();
    const double a = 0.5 + 0.5 * rng.uniform();
    for (Eigen::Index t = 0; t < frames; ++t)
      s(t) += a * std::sin(2.0 * std::numbers::pi * f * t / kMotionFrameRate + ph);
  }
  return s / 2.0;
}

/// One synthetic clip: band-limited noise carrier shaped by a syllable
/// envelope; the jaw opens with the per-frame envelope, upper-face
/// expressions and head pose carry the subject's style.
inline ClipRecord make_toy_clip(std::uint64_t seed, int subject, int clip_index, Eigen::Index frames,
                                int shape_dim = 8, int expression_dim = 6) {
  const auto style = toy_subject_style(seed, subject, shape_dim, expression_dim);
  Rng rng(seed * 6364136223846793005ULL + static_cast<std::uint64_t>(subject) * 1442695040888963407ULL +
          static_cast<std::uint64_t>(clip_index) * 2654435761ULL + 1ULL);
  const std::size_t n = SpeechEncoder::samples_for_frames(frames);
  const double rate = kCanonicalSampleRate;

  const auto env = toy_envelope(rng, n, rate);
  std::vector<double> carrier(n, 0.0);
  for (int k = 0; k < 24; ++k) {
    const double f = 150.0 + 3350.0 * rng.uniform();
    const double ph = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) carrier[i] += std::sin(2.0 * std::numbers::pi * f * i / rate + ph);
  }
  double peak = 0.0;
  for (double c : carrier) peak = std::max(peak, std::abs(c));
  ClipRecord clip;
  clip.subject_id = "s" + std::to_string(subject);
  clip.beta = style.beta;
  clip.audio.sample_rate = kCanonicalSampleRate;
  clip.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.audio.samples[i] = 0.8 * env[i] * carrier[i] / peak;

  const int dx = expression_dim + 6;
  Matrix X = Matrix::Zero(frames, dx);
  const double per_frame = rate / kMotionFrameRate;
  std::vector<Vector> upper;
  for (int k = 1; k < expression_dim; ++k) upper.push_back(toy_smooth_signal(rng, frames, 1.5));
  const Vector nod = toy_smooth_signal(rng, frames, 0.8);
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto centre = std::min(static_cast<std::size_t>((t + 0.5) * per_frame), n - 1);
    const double e = env[centre];
    X(t, 0) = style.lip_gain * e + 0.02 * rng.normal();
    for (int k = 1; k < expression_dim; ++k)
      X(t, k) = style.expression_offset(k) + style.expression_amplitude * upper[k - 1](t);
    X(t, expression_dim + 0) = style.jaw_offset + style.jaw_amplitude * e + 0.002 * rng.normal();
    const double time = t / kMotionFrameRate;
    X(t, expression_dim + 3) =
        style.pose_amplitude * std::sin(2.0 * std::numbers::pi * style.pose_frequency * time + phase) +
        0.3 * style.pose_amplitude * nod(t);
    X(t, expression_dim + 4) =
        0.6 * style.pose_amplitude * std::sin(2.0 * std::numbers::pi * 0.7 * style.pose_frequency * time + 2 * phase);
  }
  clip.motion.frames = std::move(X);
  return clip;
}

/// Deterministic toy corpus: every subject lands in the train split; held-out
/// material is produced with make_toy_clip at clip indices beyond
/// clips_per_subject.
inline Dataset make_toy_dataset(std::uint64_t seed, int n_subjects, int clips_per_subject, Eigen::Index frames = 250) {
  detail::require<ParameterError>(n_subjects >= 1 && clips_per_subject >= 1, "toy dataset: need >= 1 subject and clip");
  Dataset ds;
  for (int s = 0; s < n_subjects; ++s) {
    for (int c = 0; c < clips_per_subject; ++c) {
      auto clip = make_toy_clip(seed, s, c, frames);
      char id[32];
      std::snprintf(id, sizeof id, "s%02d_c%03d", s, c);
      ds.manifest.clips.push_back({id, std::string(id) + ".sdc", clip.subject_id, static_cast<int>(frames), "train"});
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

/// Per-frame RMS of the audio over each 1/25 s frame.
inline Vector frame_rms(const AudioClip& audio, Eigen::Index frames) {
  const double per_frame = audio.sample_rate / kMotionFrameRate;
  Vector out = Vector::Zero(frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto b = static_cast<std::size_t>(std::llround(t * per_frame));
    const auto e = std::min(static_cast<std::size_t>(std::llround((t + 1) * per_frame)), audio.samples.size());
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += audio.samples[i] * audio.samples[i];
    out(t) = e > b ? std::sqrt(acc / static_cast<double>(e - b)) : 0.0;
  }
  return out;
}

}  // namespace stylediff
