#pragma once

// Transformer decoder that predicts the clean motion of a window from its
// noisy version, the previous window's last frames, speech, style, shape and
// the diffusion step.
//
// Token layout for a window with T_p context frames and L current frames:
//
//   tokens  = [ init | ctx_0 .. ctx_{T_p-1} | cur_0 .. cur_{L-1} ]
//   memory  = [ speech_0 .. speech_{T_p-1} | speech_{T_p} .. speech_{T_p+L-1} ]
//
// init = E_step(k) + W_s s + W_b beta. Motion tokens are a linear projection
// of each frame plus a learned flag on the clean context rows. Speech and
// motion share sinusoidal position indices, and cross-attention lets motion
// position t see speech column t only; the init token sees every column.

#include "stylediff/autograd/nn.hpp"
#include "stylediff/core/config_file.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stylediff {

struct DenoiserConfig {
  int layers = 8;
  int heads = 8;
  int dim = 512;  // d
  int ff_dim = 1024;
  int window = 100;        // T_w
  int context = 10;        // T_p
  int motion_dim = 56;     // D_x
  int audio_dim = 768;     // D_a
  int shape_dim = 300;     // D_beta
  int style_dim = 128;     // d_s
  int steps = 500;         // N; valid step indices are [0, N)
  bool self_attention = true;
  std::uint64_t seed = 3;

  void validate() const {
    detail::require<ParameterError>(layers >= 1 && heads >= 1 && dim >= 1 && ff_dim >= 1,
                                    "denoiser: layers, heads, dim, ff_dim must be >= 1");
    detail::require<ParameterError>(dim % heads == 0, "denoiser: dim must be divisible by heads");
    detail::require<ParameterError>(context >= 0 && context < window, "denoiser: need 0 <= T_p < T_w");
    detail::require<ParameterError>(motion_dim >= 1 && audio_dim >= 1 && shape_dim >= 1 && style_dim >= 1,
                                    "denoiser: all dimensions must be >= 1");
    detail::require<ParameterError>(steps >= 1, "denoiser: steps must be >= 1");
  }

  void write(KeyValueConfig& kv) const {
    kv.set("denoiser.layers", layers);
    kv.set("denoiser.heads", heads);
    kv.set("denoiser.dim", dim);
    kv.set("denoiser.ff_dim", ff_dim);
    kv.set("denoiser.window", window);
    kv.set("denoiser.context", context);
    kv.set("denoiser.motion_dim", motion_dim);
    kv.set("denoiser.audio_dim", audio_dim);
    kv.set("denoiser.shape_dim", shape_dim);
    kv.set("denoiser.style_dim", style_dim);
    kv.set("denoiser.steps", steps);
    kv.set("denoiser.self_attention", self_attention ? std::string("true") : std::string("false"));
    kv.set("denoiser.seed", static_cast<long long>(seed));
  }

  static DenoiserConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, DenoiserConfig{}); }

  static DenoiserConfig from_kv(const KeyValueConfig& kv, DenoiserConfig c) {
    auto geti = [&](const char* key, int fallback) { return static_cast<int>(kv.get_int(key, fallback)); };
    c.layers = geti("denoiser.layers", c.layers);
    c.heads = geti("denoiser.heads", c.heads);
    c.dim = geti("denoiser.dim", c.dim);
    c.ff_dim = geti("denoiser.ff_dim", c.ff_dim);
    c.window = geti("denoiser.window", c.window);
    c.context = geti("denoiser.context", c.context);
    c.motion_dim = geti("denoiser.motion_dim", c.motion_dim);
    c.audio_dim = geti("denoiser.audio_dim", c.audio_dim);
    c.shape_dim = geti("denoiser.shape_dim", c.shape_dim);
    c.style_dim = geti("denoiser.style_dim", c.style_dim);
    c.steps = geti("denoiser.steps", c.steps);
    c.self_attention = kv.get_bool("denoiser.self_attention", c.self_attention);
    c.seed = static_cast<std::uint64_t>(kv.get_int("denoiser.seed", static_cast<long long>(c.seed)));
    return c;
  }
};

/// Previous window's last T_p speech features and clean motion frames. For the
/// first window both are ignored and learned start features are used.
struct WindowContext {
  Matrix prev_audio;   // T_p x D_a
  Matrix prev_motion;  // T_p x D_x
  bool is_first = true;

  static WindowContext first() { return {}; }
};

/// Conditions for one denoiser call. An empty optional means the condition is
/// dropped and replaced by its learned null embedding.
struct ConditionSet {
  std::optional<Matrix> audio;     // L x D_a, features of the current frames
  std::optional<RowVector> style;  // 1 x d_s
  Vector beta;                     // D_beta
  int step = 0;                    // in [0, N)
};

/// Filled by denoise() when requested; used by tests and training
/// instrumentation.
struct DenoiseTrace {
  bool null_audio = false;
  bool null_style = false;
  bool start_features = false;
  std::vector<std::vector<Matrix>> cross_attention;  // per layer, per head
};

/// Cross-attention mask for T_p + T_w motion positions over as many speech
/// columns: row 0 (init token) is all true, row 1 + t is true at column t only.
inline ag::BoolMatrix build_alignment_mask(int context, int window) {
  detail::require<ParameterError>(context >= 0 && window >= 1, "alignment mask: need T_p >= 0, T_w >= 1");
  const int span = context + window;
  ag::BoolMatrix m = ag::BoolMatrix::Constant(1 + span, span, false);
  m.row(0).setConstant(true);
  for (int t = 0; t < span; ++t) m(1 + t, t) = true;
  return m;
}

class Denoiser {
 public:
  explicit Denoiser(DenoiserConfig config, std::string prefix = "denoiser.") : config_(config), prefix_(std::move(prefix)) {
    config_.validate();
    Rng rng(config_.seed);
    const auto& c = config_;
    auto P = [&](const std::string& n) { return prefix_ + n; };
    motion_in_ = nn::Linear::create(store_, P("motion_in"), c.motion_dim, c.dim, rng);
    context_flag_ = store_.add(P("context_flag"), 0.02 * rng.normal_matrix(1, c.dim));
    audio_in_ = nn::Linear::create(store_, P("audio_in"), c.audio_dim, c.dim, rng);
    step_in_ = nn::Linear::create(store_, P("step_in"), c.dim, c.dim, rng);
    style_in_ = nn::Linear::create(store_, P("style_in"), c.style_dim, c.dim, rng);
    beta_in_ = nn::Linear::create(store_, P("beta_in"), c.shape_dim, c.dim, rng);
    null_audio_ = store_.add(P("null_audio"), rng.normal_matrix(1, c.audio_dim));
    null_style_ = store_.add(P("null_style"), rng.normal_matrix(1, c.style_dim));
    start_audio_ = store_.add(P("start_audio"), 0.1 * rng.normal_matrix(1, c.audio_dim));
    start_motion_ = store_.add(P("start_motion"), Matrix::Zero(1, c.motion_dim));
    for (int l = 0; l < c.layers; ++l)
      layers_.push_back(nn::DecoderLayer::create(store_, P("layer" + std::to_string(l)), c.dim, c.heads, c.ff_dim,
                                                 c.self_attention, rng));
    out_norm_ = nn::LayerNorm::create(store_, P("out_norm"), c.dim);
    // Zero output projection: predictions start at the neutral pose, inside
    // the basin of the small-angle branch of the axis-angle parameters.
    out_ = nn::Linear::create(store_, P("out"), c.dim, c.motion_dim, rng, 0.0);
  }

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  /// Initial condition token (1 x d).
  ag::Var initial_token(int step, const std::optional<RowVector>& style, const Vector& beta) const {
    check_step(step);
    detail::require<ParameterError>(beta.size() == config_.shape_dim, "denoiser: beta has wrong dimension");
    ag::Var s = null_style_;
    if (style) {
      detail::require<ParameterError>(style->size() == config_.style_dim, "denoiser: style has wrong dimension");
      s = ag::Var::constant(*style);
    }
    const ag::Var e_step = step_in_(ag::Var::constant(nn::sinusoidal_table(1, config_.dim, step)));
    return e_step + style_in_(s) + beta_in_(ag::Var::constant(Matrix(beta.transpose())));
  }

  /// Predicted clean motion for [context | current], (T_p + L) x D_x, where L
  /// = rows of x_noisy (1..T_w).
  ag::Var denoise_var(const Matrix& x_noisy, const WindowContext& ctx, const ConditionSet& cond,
                      DenoiseTrace* trace = nullptr) const {
    std::optional<ag::Var> audio;
    if (cond.audio) audio = ag::Var::constant(*cond.audio);
    return forward(x_noisy, ctx, audio, cond, trace);
  }

  /// Same, with speech features supplied as a graph node so that a trainable
  /// speech encoder receives gradients; `cond.audio` is ignored.
  ag::Var denoise_var(const Matrix& x_noisy, const WindowContext& ctx, const std::optional<ag::Var>& audio,
                      const ConditionSet& cond, DenoiseTrace* trace = nullptr) const {
    return forward(x_noisy, ctx, audio, cond, trace);
  }

  Matrix denoise(const Matrix& x_noisy, const WindowContext& ctx, const ConditionSet& cond,
                 DenoiseTrace* trace = nullptr) const {
    ag::NoGradGuard no_grad;
    return denoise_var(x_noisy, ctx, cond, trace).value();
  }

  void check_step(int step) const {
    if (step < 0 || step >= config_.steps)
      throw ParameterError("denoiser: step index " + std::to_string(step) + " outside [0, " +
                           std::to_string(config_.steps) + ")");
  }

 private:
  ag::Var forward(const Matrix& x_noisy, const WindowContext& ctx, const std::optional<ag::Var>& audio,
                  const ConditionSet& cond, DenoiseTrace* trace) const {
    const auto& c = config_;
    const auto L = x_noisy.rows();
    const Eigen::Index Tp = c.context;
    detail::require<ParameterError>(L >= 1 && L <= c.window, "denoiser: window length must be in [1, T_w]");
    detail::require<ParameterError>(x_noisy.cols() == c.motion_dim, "denoiser: noisy motion has wrong dimension");
    if (!ctx.is_first) {
      detail::require<ParameterError>(ctx.prev_motion.rows() == Tp && ctx.prev_motion.cols() == c.motion_dim,
                                      "denoiser: context motion must be T_p x D_x");
      detail::require<ParameterError>(ctx.prev_audio.rows() == Tp && ctx.prev_audio.cols() == c.audio_dim,
                                      "denoiser: context speech must be T_p x D_a");
    }
    if (audio)
      detail::require<ParameterError>(audio->rows() == L && audio->cols() == c.audio_dim,
                                      "denoiser: speech must be L x D_a");
    const auto S = Tp + L;
    if (trace) {
      trace->null_audio = !audio.has_value();
      trace->null_style = !cond.style.has_value();
      trace->start_features = ctx.is_first;
      trace->cross_attention.assign(c.layers, {});
    }
    const ag::Var pe = ag::Var::constant(nn::sinusoidal_table(S, c.dim));

    ag::Var motion_tokens = motion_in_(ag::Var::constant(x_noisy));
    if (Tp > 0) {
      ag::Var prev = ctx.is_first ? ag::broadcast_rows(start_motion_, Tp) : ag::Var::constant(ctx.prev_motion);
      motion_tokens = ag::concat_rows({ag::add_row(motion_in_(prev), context_flag_), motion_tokens});
    }
    ag::Var tokens = ag::concat_rows({initial_token(cond.step, cond.style, cond.beta), motion_tokens + pe});

    ag::Var speech;
    if (!audio) {
      speech = ag::broadcast_rows(null_audio_, S);
    } else if (Tp > 0) {
      ag::Var prev = ctx.is_first ? ag::broadcast_rows(start_audio_, Tp) : ag::Var::constant(ctx.prev_audio);
      speech = ag::concat_rows({prev, *audio});
    } else {
      speech = *audio;
    }
    const ag::Var memory = audio_in_(speech) + pe;

    const auto mask = std::make_shared<const ag::BoolMatrix>(build_alignment_mask(static_cast<int>(Tp), static_cast<int>(L)));
    for (std::size_t l = 0; l < layers_.size(); ++l)
      tokens = layers_[l](tokens, memory, mask, trace ? &trace->cross_attention[l] : nullptr);
    return out_(out_norm_(ag::slice_rows(tokens, 1, S)));
  }

  DenoiserConfig config_;
  std::string prefix_;
  nn::ParameterStore store_;
  nn::Linear motion_in_, audio_in_, step_in_, style_in_, beta_in_, out_;
  ag::Var context_flag_, null_audio_, null_style_, start_audio_, start_motion_;
  std::vector<nn::DecoderLayer> layers_;
  nn::LayerNorm out_norm_;
};

}  // namespace stylediff
