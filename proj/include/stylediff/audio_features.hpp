#pragma once

// Speech features aligned to the 25 Hz motion rate. An encoder produces
// features at its native rate; resample_features maps them onto exactly T
// motion frames by linear interpolation.

#include "stylediff/autograd/nn.hpp"
#include "stylediff/checkpoint.hpp"
#include "stylediff/core/binary_io.hpp"
#include "stylediff/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace stylediff {

inline constexpr int kCanonicalSampleRate = 16000;

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kCanonicalSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct SpeechFeatures {
  Matrix features;  // T x D_a
  double frame_rate = kMotionFrameRate;
};

// ---------------------------------------------------------------------------
// WAV I/O (16-bit PCM)

inline AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 12 || std::string(bytes.data(), 4) != "RIFF" || std::string(bytes.data() + 8, 4) != "WAVE")
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  int channels = 0, rate = 0, bits = 0;
  std::vector<double> samples;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  auto u16_at = [&](std::size_t p) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[p]) |
                                      (static_cast<unsigned char>(bytes[p + 1]) << 8));
  };
  auto u32_at = [&](std::size_t p) {
    return static_cast<std::uint32_t>(u16_at(p)) | (static_cast<std::uint32_t>(u16_at(p + 2)) << 16);
  };
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.data() + pos, 4);
    const std::uint32_t size = u32_at(pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw DataError(path.string() + ": short fmt chunk");
      const auto format = u16_at(body);
      channels = u16_at(body + 2);
      rate = static_cast<int>(u32_at(body + 4));
      bits = u16_at(body + 14);
      if (format != 1 || bits != 16) throw DataError(path.string() + ": only 16-bit PCM WAV is supported");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || channels < 1) throw DataError(path.string() + ": data chunk before fmt");
      const std::size_t frames = size / (2u * channels);
      samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(u16_at(body + 2 * (f * channels + c)));
          acc += raw / 32768.0;
        }
        samples[f] = acc / channels;
      }
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_data) throw DataError(path.string() + ": no data chunk");
  return {std::move(samples), rate};
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  io::ByteWriter w;
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  w.magic("RIFF");
  w.u32(36 + 2 * n);
  w.magic("WAVE");
  w.magic("fmt ");
  w.u32(16);
  w.u32(1u | (1u << 16));  // PCM, mono
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.u32(2u | (16u << 16));  // block align 2, 16 bits
  w.magic("data");
  w.u32(2 * n);
  std::vector<char> bytes = w.bytes();
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32768.0));
    bytes.push_back(static_cast<char>(v & 0xff));
    bytes.push_back(static_cast<char>((v >> 8) & 0xff));
  }
  io::write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Scales down so that max |sample| = 1; clips already within [-1, 1] pass
/// through unchanged.
inline AudioClip peak_normalize(AudioClip clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : clip.samples) s /= peak;
  return clip;
}

/// Linear-interpolation sample-rate conversion.
inline AudioClip resample_audio(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate == target_rate || clip.samples.empty()) return {clip.samples, target_rate};
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) * target_rate / clip.sample_rate));
  std::vector<double> out(std::max<std::size_t>(n_out, 1));
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = i * step;
    const auto i0 = std::min(static_cast<std::size_t>(p), clip.samples.size() - 1);
    const auto i1 = std::min(i0 + 1, clip.samples.size() - 1);
    const double f = p - static_cast<double>(i0);
    out[i] = (1.0 - f) * clip.samples[i0] + f * clip.samples[i1];
  }
  return {std::move(out), target_rate};
}

/// Interpolation operator (T x T_raw) placing T uniformly spaced positions on
/// [0, T_raw - 1].
inline Matrix resampling_matrix(Eigen::Index raw_frames, Eigen::Index target_frames) {
  detail::require<ParameterError>(raw_frames >= 1, "resample: need at least one raw frame");
  detail::require<ParameterError>(target_frames >= 1, "resample: target frame count must be >= 1");
  Matrix W = Matrix::Zero(target_frames, raw_frames);
  for (Eigen::Index i = 0; i < target_frames; ++i) {
    const double p = target_frames == 1 ? 0.0
                                        : static_cast<double>(i) * static_cast<double>(raw_frames - 1) /
                                              static_cast<double>(target_frames - 1);
    auto i0 = static_cast<Eigen::Index>(std::floor(p));
    i0 = std::min(i0, raw_frames - 1);
    const double f = p - static_cast<double>(i0);
    W(i, i0) += 1.0 - f;
    if (f > 0.0) W(i, i0 + 1) += f;
  }
  return W;
}

inline ag::Var resample_features(const ag::Var& raw, Eigen::Index target_frames) {
  return ag::matmul(ag::Var::constant(resampling_matrix(raw.rows(), target_frames)), raw);
}

inline Matrix resample_features(const Matrix& raw, Eigen::Index target_frames) {
  return resampling_matrix(raw.rows(), target_frames) * raw;
}

// ---------------------------------------------------------------------------
// Encoders

/// Pluggable speech encoder. encode_raw consumes canonical-rate audio and
/// returns features at native_rate(); the result is differentiable with
/// respect to parameters() when grad mode is on.
class SpeechEncoder {
 public:
  virtual ~SpeechEncoder() = default;
  virtual ag::Var encode_raw(const AudioClip& audio) const = 0;
  virtual int feature_dim() const = 0;
  virtual double native_rate() const = 0;
  virtual std::string kind() const = 0;
  virtual KeyValueConfig config() const = 0;
  virtual nn::ParameterStore& parameters() = 0;
  const nn::ParameterStore& parameters() const { return const_cast<SpeechEncoder*>(this)->parameters(); }

  /// Audio samples needed for T motion frames at the canonical rate.
  static std::size_t samples_for_frames(Eigen::Index frames) {
    return static_cast<std::size_t>(frames) * kCanonicalSampleRate / static_cast<std::size_t>(kMotionFrameRate);
  }

  /// Exactly T feature frames. Audio is peak-normalised, converted to the
  /// canonical rate, then zero-padded or cut to T/25 seconds before encoding.
  ag::Var encode_var(const AudioClip& audio, Eigen::Index target_frames) const {
    if (audio.samples.empty()) throw InputError("encode: empty audio");
    if (audio.sample_rate <= 0) throw InputError("encode: sample rate must be positive");
    detail::require<ParameterError>(target_frames >= 1, "encode: target frame count must be >= 1");
    AudioClip clip = resample_audio(peak_normalize(audio), kCanonicalSampleRate);
    clip.samples.resize(samples_for_frames(target_frames), 0.0);
    return resample_features(encode_raw(clip), target_frames);
  }

  SpeechFeatures encode(const AudioClip& audio, Eigen::Index target_frames) const {
    ag::NoGradGuard no_grad;
    return {encode_var(audio, target_frames).value(), kMotionFrameRate};
  }
};

struct ToyConvConfig {
  int channels1 = 16;
  int channels2 = 32;
  int feature_dim = 32;
  std::uint64_t seed = 11;
};

/// Three valid strided convolutions (kernel/stride 10/5, 8/8, 8/8 → 320x
/// decimation, 50 Hz at 16 kHz) with ReLU after the first two.
class ToyConvEncoder final : public SpeechEncoder {
 public:
  static constexpr int kKernels[3] = {10, 8, 8};
  static constexpr int kStrides[3] = {5, 8, 8};

  explicit ToyConvEncoder(ToyConvConfig config = {}) : config_(config) {
    Rng rng(config.seed);
    const int chans[4] = {1, config.channels1, config.channels2, config.feature_dim};
    for (int l = 0; l < 3; ++l) {
      const auto name = "conv" + std::to_string(l);
      const double gain = l < 2 ? std::sqrt(2.0) : 1.0;
      store_.add(name + ".weight", nn::xavier(kKernels[l] * chans[l], chans[l + 1], rng, gain));
      store_.add(name + ".bias", Matrix::Zero(1, chans[l + 1]));
    }
  }

  static ToyConvConfig config_from(const KeyValueConfig& kv) {
    ToyConvConfig c;
    c.channels1 = static_cast<int>(kv.get_int("audio.channels1", c.channels1));
    c.channels2 = static_cast<int>(kv.get_int("audio.channels2", c.channels2));
    c.feature_dim = static_cast<int>(kv.get_int("audio.feature_dim", c.feature_dim));
    c.seed = static_cast<std::uint64_t>(kv.get_int("audio.seed", static_cast<long long>(c.seed)));
    return c;
  }

  ag::Var encode_raw(const AudioClip& audio) const override {
    const auto n = static_cast<Eigen::Index>(audio.samples.size());
    if (n < receptive_field()) throw InputError("encode: audio shorter than the encoder receptive field");
    Matrix x = Eigen::Map<const Matrix>(audio.samples.data(), n, 1);
    ag::Var h = ag::Var::constant(std::move(x));
    for (int l = 0; l < 3; ++l) {
      const auto name = "conv" + std::to_string(l);
      h = ag::conv1d(h, store_.get(name + ".weight"), store_.get(name + ".bias"), kKernels[l], kStrides[l]);
      if (l < 2) h = ag::relu(h);
    }
    return h;
  }

  static Eigen::Index receptive_field() {
    return kKernels[0] + kStrides[0] * (kKernels[1] - 1) + kStrides[0] * kStrides[1] * (kKernels[2] - 1);
  }

  int feature_dim() const override { return config_.feature_dim; }
  double native_rate() const override {
    return static_cast<double>(kCanonicalSampleRate) / (kStrides[0] * kStrides[1] * kStrides[2]);
  }
  std::string kind() const override { return "toy"; }
  KeyValueConfig config() const override {
    KeyValueConfig kv;
    kv.set("audio.encoder", std::string("toy"));
    kv.set("audio.channels1", config_.channels1);
    kv.set("audio.channels2", config_.channels2);
    kv.set("audio.feature_dim", config_.feature_dim);
    kv.set("audio.seed", static_cast<long long>(config_.seed));
    return kv;
  }
  nn::ParameterStore& parameters() override { return store_; }

 private:
  ToyConvConfig config_;
  nn::ParameterStore store_;
};

struct PretrainedEncoderConfig {
  int frontend_channels = 64;
  int hidden_dim = 64;
  int layers = 2;
  int heads = 4;
  int feature_dim = 768;
  std::uint64_t seed = 13;
};

/// Adapter for a pretrained self-supervised speech model: a convolutional
/// front end (320x decimation to 50 Hz) followed by a transformer encoder,
/// emitting the final hidden layer. Weights load from an SDCK checkpoint of
/// kind "speech_encoder"; converting third-party weights into that container
/// is a separate offline step. The front end can be frozen so that only the
/// transformer stack trains.
class PretrainedEncoderAdapter final : public SpeechEncoder {
 public:
  explicit PretrainedEncoderAdapter(PretrainedEncoderConfig config = {}) : config_(config) {
    Rng rng(config.seed);
    const int chans[4] = {1, config.frontend_channels, config.frontend_channels, config.hidden_dim};
    for (int l = 0; l < 3; ++l) {
      const auto name = "frontend.conv" + std::to_string(l);
      store_.add(name + ".weight", nn::xavier(ToyConvEncoder::kKernels[l] * chans[l], chans[l + 1], rng));
      store_.add(name + ".bias", Matrix::Zero(1, chans[l + 1]));
    }
    for (int l = 0; l < config.layers; ++l)
      layers_.push_back(nn::EncoderLayer::create(store_, "transformer.layer" + std::to_string(l),
                                                 config.hidden_dim, config.heads, 2 * config.hidden_dim, rng));
    final_norm_ = nn::LayerNorm::create(store_, "transformer.norm", config.hidden_dim);
    out_ = nn::Linear::create(store_, "transformer.out", config.hidden_dim, config.feature_dim, rng);
  }

  static PretrainedEncoderConfig config_from(const KeyValueConfig& kv) {
    PretrainedEncoderConfig c;
    c.frontend_channels = static_cast<int>(kv.get_int("audio.frontend_channels", c.frontend_channels));
    c.hidden_dim = static_cast<int>(kv.get_int("audio.hidden_dim", c.hidden_dim));
    c.layers = static_cast<int>(kv.get_int("audio.layers", c.layers));
    c.heads = static_cast<int>(kv.get_int("audio.heads", c.heads));
    c.feature_dim = static_cast<int>(kv.get_int("audio.feature_dim", c.feature_dim));
    c.seed = static_cast<std::uint64_t>(kv.get_int("audio.seed", static_cast<long long>(c.seed)));
    return c;
  }

  static std::unique_ptr<PretrainedEncoderAdapter> load(const std::filesystem::path& path) {
    const auto ck = Checkpoint::load(path);
    auto enc = std::make_unique<PretrainedEncoderAdapter>(config_from(ck.config));
    ck.load_into(enc->store_, "speech_encoder");
    return enc;
  }

  void set_frontend_frozen(bool frozen) {
    store_.set_trainable("frontend.", !frozen);
    frontend_frozen_ = frozen;
  }
  bool frontend_frozen() const { return frontend_frozen_; }

  ag::Var encode_raw(const AudioClip& audio) const override {
    const auto n = static_cast<Eigen::Index>(audio.samples.size());
    if (n < ToyConvEncoder::receptive_field())
      throw InputError("encode: audio shorter than the encoder receptive field");
    ag::Var h = ag::Var::constant(Eigen::Map<const Matrix>(audio.samples.data(), n, 1));
    for (int l = 0; l < 3; ++l) {
      const auto name = "frontend.conv" + std::to_string(l);
      h = ag::gelu(ag::conv1d(h, store_.get(name + ".weight"), store_.get(name + ".bias"),
                              ToyConvEncoder::kKernels[l], ToyConvEncoder::kStrides[l]));
    }
    h = ag::add(h, ag::Var::constant(nn::sinusoidal_table(h.rows(), h.cols())));
    for (const auto& layer : layers_) h = layer(h);
    return out_(final_norm_(h));
  }

  int feature_dim() const override { return config_.feature_dim; }
  double native_rate() const override { return 50.0; }
  std::string kind() const override { return "pretrained"; }
  KeyValueConfig config() const override {
    KeyValueConfig kv;
    kv.set("audio.encoder", std::string("pretrained"));
    kv.set("audio.frontend_channels", config_.frontend_channels);
    kv.set("audio.hidden_dim", config_.hidden_dim);
    kv.set("audio.layers", config_.layers);
    kv.set("audio.heads", config_.heads);
    kv.set("audio.feature_dim", config_.feature_dim);
    kv.set("audio.seed", static_cast<long long>(config_.seed));
    return kv;
  }
  nn::ParameterStore& parameters() override { return store_; }

 private:
  PretrainedEncoderConfig config_;
  nn::ParameterStore store_;
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear out_;
  bool frontend_frozen_ = false;
};

/// Encoder selected by STYLEDIFF_ENCODER (toy | pretrained), toy if unset.
inline std::string default_encoder_kind() {
  const char* env = std::getenv("STYLEDIFF_ENCODER");
  std::string kind = env ? env : "toy";
  if (kind != "toy" && kind != "pretrained")
    throw ParameterError("STYLEDIFF_ENCODER must be 'toy' or 'pretrained', got '" + kind + "'");
  return kind;
}

/// Builds an encoder from a config (keys audio.*). A pretrained encoder whose
/// weights file is configured via audio.weights is loaded from it.
inline std::unique_ptr<SpeechEncoder> make_encoder(const std::string& kind, const KeyValueConfig& kv) {
  if (kind == "toy") return std::make_unique<ToyConvEncoder>(ToyConvEncoder::config_from(kv));
  if (kind == "pretrained") {
    if (kv.has("audio.weights")) {
      auto enc = PretrainedEncoderAdapter::load(kv.get_string("audio.weights", ""));
      enc->set_frontend_frozen(kv.get_bool("audio.freeze_frontend", true));
      return enc;
    }
    auto enc = std::make_unique<PretrainedEncoderAdapter>(PretrainedEncoderAdapter::config_from(kv));
    enc->set_frontend_frozen(kv.get_bool("audio.freeze_frontend", true));
    return enc;
  }
  throw ParameterError("unknown encoder kind: " + kind);
}

}  // namespace stylediff
