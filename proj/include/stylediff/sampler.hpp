#pragma once

// Reverse diffusion with incremental classifier-free guidance, and window
// chaining for sequences longer than one window.

#include "stylediff/core/log.hpp"
#include "stylediff/model.hpp"

#include <functional>
#include <optional>

namespace stylediff {

struct GuidanceConfig {
  double audio_scale = 1.15;  // w_a
  double style_scale = 3.0;   // w_s

  void validate() const {
    detail::require<ParameterError>(std::isfinite(audio_scale) && std::isfinite(style_scale),
                                    "guidance scales must be finite");
  }
};

/// Any callable with the denoiser's inference signature.
using DenoiseFn = std::function<Matrix(const Matrix&, const WindowContext&, const ConditionSet&)>;

inline DenoiseFn denoise_fn(const Denoiser& d) {
  return [&d](const Matrix& x, const WindowContext& ctx, const ConditionSet& cond) { return d.denoise(x, ctx, cond); };
}

/// D(0,0) + w_a [D(A,0) - D(0,0)] + w_s [D(A,s) - D(A,0)], evaluated so that
/// w_a = w_s = 1 yields D(A,s) and w_a = 1, w_s = 0 yields D(A,0) exactly.
/// Calls whose coefficient vanishes are skipped.
inline Matrix guided_x0(const DenoiseFn& denoise, const Matrix& x_noisy, const WindowContext& ctx,
                        const std::optional<Matrix>& audio, const std::optional<RowVector>& style, const Vector& beta,
                        int step, const GuidanceConfig& g) {
  ConditionSet full{audio, style, beta, step};
  ConditionSet audio_only{audio, std::nullopt, beta, step};
  ConditionSet none{std::nullopt, std::nullopt, beta, step};
  const double wa = g.audio_scale;
  const double ws = g.style_scale;

  std::optional<Matrix> c_a;
  auto audio_term = [&](Matrix& out) {
    if (wa == 1.0) return;
    if (!c_a) c_a = denoise(x_noisy, ctx, audio_only);
    out += (wa - 1.0) * (*c_a - denoise(x_noisy, ctx, none));
  };

  if (ws == 1.0) {
    Matrix out = denoise(x_noisy, ctx, full);
    audio_term(out);
    return out;
  }
  c_a = denoise(x_noisy, ctx, audio_only);
  Matrix out = *c_a;
  audio_term(out);
  if (ws != 0.0) out += ws * (denoise(x_noisy, ctx, full) - *c_a);
  return out;
}

/// Called after every denoising step with (n, X^n-before-step, X̂^0).
using StepObserver = std::function<void(int, const Matrix&, const Matrix&)>;

/// Runs n = N..1 on the current frames of one window. Context frames are
/// never part of the diffusion state: they are handed to the denoiser
/// unchanged at every step and copied into the output, so they stay exactly
/// equal to the previous window's motion. Returns (T_p + L) x D_x; for the
/// first window the context rows are the final prediction for the start
/// slots.
inline Matrix sample_window(const DenoiseFn& denoise, const NoiseSchedule& schedule, Eigen::Index length,
                            Eigen::Index motion_dim, const WindowContext& ctx, const std::optional<Matrix>& audio,
                            const std::optional<RowVector>& style, const Vector& beta, const GuidanceConfig& g, Rng& rng,
                            const StepObserver& observer = {}) {
  detail::require<ParameterError>(length >= 1 && motion_dim >= 1, "sample_window: empty window");
  Matrix x = rng.normal_matrix(length, motion_dim);
  Matrix x0;
  for (int n = schedule.steps(); n >= 1; --n) {
    x0 = guided_x0(denoise, x, ctx, audio, style, beta, n - 1, g);
    detail::require<ParameterError>(x0.rows() >= length && x0.cols() == motion_dim,
                                    "sample_window: denoiser output has wrong shape");
    if (observer) observer(n, x, x0);
    x = renoise(schedule, x0.bottomRows(length), x, n, rng);
  }
  const auto Tp = x0.rows() - length;
  Matrix out(Tp + length, motion_dim);
  if (Tp > 0) out.topRows(Tp) = ctx.is_first ? Matrix(x0.topRows(Tp)) : ctx.prev_motion;
  out.bottomRows(length) = x;
  return out;
}

struct WindowRecord {
  int index = 0;
  WindowContext context;
  Matrix output;  // (T_p + T_w) x D_x
};

using WindowObserver = std::function<void(const WindowRecord&)>;

struct GenerateOptions {
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  WindowObserver on_window;
};

/// Window chaining on precomputed features. `features` must cover
/// ceil(T / T_w) * T_w frames; the tail beyond T is padding.
inline Matrix generate_from_features(const DenoiseFn& denoise, const NoiseSchedule& schedule, int window, int context,
                                     Eigen::Index motion_dim, const Matrix& features, Eigen::Index frames,
                                     const Vector& beta, const std::optional<RowVector>& style,
                                     const GenerateOptions& opts) {
  detail::require<ParameterError>(frames >= 1, "generate: frame count must be >= 1");
  const Eigen::Index windows = (frames + window - 1) / window;
  detail::require<ParameterError>(features.rows() >= windows * window, "generate: not enough speech features");
  opts.guidance.validate();
  Rng rng(opts.seed);
  Matrix motion(windows * window, motion_dim);
  for (Eigen::Index k = 0; k < windows; ++k) {
    WindowContext ctx;
    if (k > 0) {
      const auto start = k * window - context;
      ctx = {features.middleRows(start, context), motion.middleRows(start, context), false};
    }
    const Matrix audio = features.middleRows(k * window, window);
    Matrix out = sample_window(denoise, schedule, window, motion_dim, ctx, audio, style, beta, opts.guidance, rng);
    motion.middleRows(k * window, window) = out.bottomRows(window);
    if (opts.on_window) opts.on_window({static_cast<int>(k), ctx, out});
  }
  return motion.topRows(frames);
}

/// Motion for `frames` frames of speech. The audio is encoded to a whole
/// number of windows (silence-padded) and the output trimmed to `frames`.
inline MotionSequence generate(const StyleDiffModel& model, const AudioClip& audio, const Vector& beta,
                               const std::optional<RowVector>& style, Eigen::Index frames,
                               const GenerateOptions& opts = {}) {
  if (audio.samples.empty()) throw InputError("generate: empty audio");
  detail::require<ParameterError>(frames >= 1, "generate: frame count must be >= 1");
  const auto& c = model.config();
  const Eigen::Index windows = (frames + c.window - 1) / c.window;
  const Matrix features = model.speech().encode(audio, windows * c.window).features;
  return {generate_from_features(denoise_fn(model.denoiser()), model.schedule(), c.window, c.context, c.motion_dim,
                                 features, frames, beta, style, opts)};
}

/// Frame count matching an audio clip's duration at 25 fps (at least 1).
inline Eigen::Index frames_for_audio(const AudioClip& audio) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(audio.duration() * kMotionFrameRate)));
}

}  // namespace stylediff
