#pragma once

// Two-window denoiser training with condition dropout and random truncation.
// Each sample spans 2 T_w frames: the first half is trained as a first window
// (start features, style of the second half), the second half with the
// ground-truth context of the first half and the style of the first half.

#include "stylediff/dataset.hpp"
#include "stylediff/losses.hpp"
#include "stylediff/model.hpp"
#include "stylediff/style_encoder.hpp"

#include <functional>

namespace stylediff {

struct TrainConfig {
  int iterations = 90000;
  int batch = 16;
  double lr = 1e-4;
  int warmup = 5000;
  double clip_norm = 0.0;
  double p_drop_both = 0.1;   // speech and style both replaced by null
  double p_drop_style = 0.45; // style alone replaced by null
  int min_length = 20;        // T_min for truncation
  std::uint64_t seed = 1;
  int log_every = 100;
  LossWeights weights;

  void validate() const {
    detail::require<ParameterError>(iterations >= 0 && batch >= 1, "train: iterations >= 0 and batch >= 1");
    detail::require<ParameterError>(p_drop_both >= 0 && p_drop_style >= 0 && p_drop_both + p_drop_style <= 1.0,
                                    "train: dropout probabilities must be nonnegative with sum <= 1");
    detail::require<ParameterError>(min_length >= 1, "train: min_length must be >= 1");
    weights.validate();
  }

  static TrainConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, TrainConfig{}); }

  static TrainConfig from_kv(const KeyValueConfig& kv, TrainConfig c) {
    c.iterations = static_cast<int>(kv.get_int("train.iterations", c.iterations));
    c.batch = static_cast<int>(kv.get_int("train.batch", c.batch));
    c.lr = kv.get_double("train.lr", c.lr);
    c.warmup = static_cast<int>(kv.get_int("train.warmup", c.warmup));
    c.clip_norm = kv.get_double("train.clip_norm", c.clip_norm);
    c.p_drop_both = kv.get_double("train.p_drop_both", c.p_drop_both);
    c.p_drop_style = kv.get_double("train.p_drop_style", c.p_drop_style);
    c.min_length = static_cast<int>(kv.get_int("train.min_length", c.min_length));
    c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(c.seed)));
    c.log_every = static_cast<int>(kv.get_int("train.log_every", c.log_every));
    c.weights = LossWeights::from_kv(kv, c.weights);
    c.validate();
    return c;
  }
};

enum class DropEvent { none, style, both };

inline DropEvent draw_drop_event(Rng& rng, double p_both, double p_style) {
  const double u = rng.uniform();
  if (u < p_both) return DropEvent::both;
  if (u < p_both + p_style) return DropEvent::style;
  return DropEvent::none;
}

/// What one window of one sample saw during a training step.
struct WindowTrace {
  int sample = 0;
  int window = 0;  // 0 or 1
  DropEvent drop = DropEvent::none;
  int length = 0;  // truncated current-frame count L
  int step = 0;    // diffusion step n in [1, N]
  DenoiseTrace denoise;
  double loss = 0.0;
};

using TrainHook = std::function<void(const WindowTrace&)>;

class DenoiserTrainer {
 public:
  DenoiserTrainer(StyleDiffModel& model, const StyleEncoder& style, const FaceTemplate& tpl, TrainConfig config)
      : model_(model),
        style_(style),
        tpl_(tpl),
        config_(config),
        params_(model.combined_parameters()),
        opt_(params_, {.lr = config.lr, .warmup_steps = config.warmup, .clip_norm = config.clip_norm}),
        rng_(config.seed) {
    config_.validate();
    const auto& c = model.config();
    detail::require<ParameterError>(style.config().window == c.window,
                                    "train: style encoder window must equal the denoiser window");
    detail::require<ParameterError>(style.config().dim == c.style_dim, "train: style dimension mismatch");
    detail::require<ParameterError>(tpl.motion_dim() == c.motion_dim, "train: template motion dimension mismatch");
    detail::require<ParameterError>(tpl.shape_dim() == c.shape_dim, "train: template shape dimension mismatch");
    detail::require<ParameterError>(config_.min_length <= c.window, "train: min_length exceeds the window");
  }

  void set_hook(TrainHook hook) { hook_ = std::move(hook); }

  /// One optimiser step on samples of 2 T_w frames. Returns the mean
  /// per-window loss.
  double step(const std::vector<WindowSample>& batch) {
    const auto& c = model_.config();
    const Eigen::Index Tw = c.window;
    const Eigen::Index Tp = c.context;
    std::vector<ag::Var> losses;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& sample = batch[b];
      detail::require<ParameterError>(sample.motion.rows() == 2 * Tw, "train: sample must span 2 T_w frames");
      const Matrix& X = sample.motion;
      const ag::Var features = model_.speech().encode_var(sample.audio, 2 * Tw);
      RowVector s_first, s_second;
      {
        ag::NoGradGuard no_grad;
        s_first = style_.encode_style(X.topRows(Tw));
        s_second = style_.encode_style(X.bottomRows(Tw));
      }
      const DropEvent drop = draw_drop_event(rng_, config_.p_drop_both, config_.p_drop_style);

      for (int w = 0; w < 2; ++w) {
        const auto L = static_cast<Eigen::Index>(rng_.uniform_int(config_.min_length, static_cast<int>(Tw)));
        const int n = rng_.uniform_int(1, model_.schedule().steps());
        const Eigen::Index begin = w * Tw;
        const Matrix x0 = X.middleRows(begin, L);
        const Matrix xn = q_sample(model_.schedule(), x0, n, rng_.normal_matrix(L, c.motion_dim));

        WindowContext ctx;
        Matrix target = x0;
        if (w == 1) {
          ctx = {features.value().middleRows(Tw - Tp, Tp), X.middleRows(Tw - Tp, Tp), false};
          target = X.middleRows(Tw - Tp, Tp + L);
        }
        ConditionSet cond;
        cond.beta = sample.beta;
        cond.step = n - 1;
        if (drop == DropEvent::none) cond.style = (w == 0) ? s_second : s_first;
        std::optional<ag::Var> audio;
        if (drop != DropEvent::both) audio = ag::slice_rows(features, begin, L);

        WindowTrace trace{static_cast<int>(b), w, drop, static_cast<int>(L), n, {}, 0.0};
        ag::Var pred = model_.denoiser().denoise_var(xn, ctx, audio, cond, hook_ ? &trace.denoise : nullptr);
        // The first window has no ground truth for its start slots.
        if (w == 0) pred = ag::slice_rows(pred, Tp, L);
        ag::Var loss = total_loss_var(tpl_, sample.beta, target, pred, config_.weights);
        trace.loss = loss.item();
        total += trace.loss;
        losses.push_back(loss);
        if (hook_) hook_(trace);
      }
    }
    ag::Var sum = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) sum = sum + losses[i];
    ag::backward((1.0 / static_cast<double>(losses.size())) * sum);
    opt_.step();
    return total / static_cast<double>(losses.size());
  }

  int steps_taken() const { return opt_.steps_taken(); }
  const TrainConfig& config() const { return config_; }

 private:
  StyleDiffModel& model_;
  const StyleEncoder& style_;
  const FaceTemplate& tpl_;
  TrainConfig config_;
  nn::ParameterStore params_;
  nn::Adam opt_;
  Rng rng_;
  TrainHook hook_;
};

/// Full training loop over 2 T_w-frame windows of `clip_indices`. Returns the
/// per-step mean loss.
inline std::vector<double> train_denoiser(StyleDiffModel& model, const StyleEncoder& style, const FaceTemplate& tpl,
                                          const Dataset& ds, const std::vector<std::size_t>& clip_indices,
                                          const TrainConfig& config,
                                          const std::function<void(int, double)>& on_step = {}) {
  DenoiserTrainer trainer(model, style, tpl, config);
  WindowSampler sampler(ds, clip_indices, 2 * model.config().window, config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> losses;
  losses.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    const double loss = trainer.step(sampler.batch(config.batch));
    losses.push_back(loss);
    if (on_step) on_step(it, loss);
    if (config.log_every > 0 && (it + 1) % config.log_every == 0)
      log::info("denoiser step").kv("iter", it + 1).kv("loss", loss);
  }
  return losses;
}

}  // namespace stylediff
