#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace stylediff;
using stylediff::testing::tiny_denoiser_config;

namespace {

/// Stub with a distinct, input-dependent output for each condition pattern.
struct StubDenoiser {
  Matrix none, audio_only, full;
  int calls = 0;

  Matrix operator()(const Matrix& x, const WindowContext&, const ConditionSet& c) {
    ++calls;
    const Matrix& base = !c.audio ? none : (!c.style ? audio_only : full);
    return base + 0.5 * x;
  }
};

DenoiseFn wrap(StubDenoiser& s) {
  return [&s](const Matrix& x, const WindowContext& ctx, const ConditionSet& c) { return s(x, ctx, c); };
}

}  // namespace

TEST(Guidance, UnitScalesReturnTheConditionalPredictionExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    StubDenoiser s{rng.normal_matrix(4, 3), rng.normal_matrix(4, 3), rng.normal_matrix(4, 3)};
    const Matrix x = rng.normal_matrix(4, 3);
    const Matrix audio = rng.normal_matrix(4, 2);
    const RowVector style = rng.normal_matrix(1, 2);
    const Vector beta = Vector::Zero(2);
    const Matrix full = guided_x0(wrap(s), x, {}, audio, style, beta, 0, {1.0, 1.0});
    EXPECT_EQ(full, Matrix(s.full + 0.5 * x));
    const Matrix audio_only = guided_x0(wrap(s), x, {}, audio, style, beta, 0, {1.0, 0.0});
    EXPECT_EQ(audio_only, Matrix(s.audio_only + 0.5 * x));
  }
}

TEST(Guidance, GeneralScalesMatchTheIncrementalFormula) {
  Rng rng(2);
  StubDenoiser s{rng.normal_matrix(5, 2), rng.normal_matrix(5, 2), rng.normal_matrix(5, 2)};
  const Matrix x = rng.normal_matrix(5, 2);
  const Matrix c0 = s.none + 0.5 * x, ca = s.audio_only + 0.5 * x, cas = s.full + 0.5 * x;
  const Matrix got = guided_x0(wrap(s), x, {}, Matrix::Zero(5, 1), RowVector::Zero(1), Vector::Zero(1), 0, {2.0, 3.0});
  EXPECT_LT((got - (c0 + 2.0 * (ca - c0) + 3.0 * (cas - ca))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s.calls, 3);
}

TEST(Guidance, SkipsCallsWithZeroCoefficient) {
  Rng rng(3);
  StubDenoiser s{rng.normal_matrix(2, 2), rng.normal_matrix(2, 2), rng.normal_matrix(2, 2)};
  const Matrix x = rng.normal_matrix(2, 2);
  guided_x0(wrap(s), x, {}, Matrix::Zero(2, 1), RowVector::Zero(1), Vector::Zero(1), 0, {1.0, 1.0});
  EXPECT_EQ(s.calls, 1);
  s.calls = 0;
  guided_x0(wrap(s), x, {}, Matrix::Zero(2, 1), RowVector::Zero(1), Vector::Zero(1), 0, {1.0, 0.0});
  EXPECT_EQ(s.calls, 1);
  EXPECT_THROW(GuidanceConfig({std::nan(""), 1.0}).validate(), ParameterError);
}

TEST(Sampler, ConstantDenoiserIsAFixedPoint) {
  Rng rng(4);
  const Matrix target = rng.normal_matrix(6, 3);
  const DenoiseFn constant = [&](const Matrix&, const WindowContext&, const ConditionSet&) { return target; };
  for (int N : {1, 5, 500}) {
    const auto schedule = NoiseSchedule::cosine(N);
    Rng r(N);
    const Matrix out =
        sample_window(constant, schedule, 6, 3, {}, std::nullopt, std::nullopt, Vector::Zero(1), {1.0, 1.0}, r);
    EXPECT_LT((out - target).cwiseAbs().maxCoeff(), 1e-12) << "N=" << N;
  }
}

TEST(Sampler, FiveStepTranscriptMatchesScriptedLoop) {
  const auto schedule = NoiseSchedule::cosine(5);
  const DenoiseFn shrink = [](const Matrix& x, const WindowContext&, const ConditionSet& c) {
    return Matrix(0.3 * x.array().tanh() + 0.01 * c.step);
  };
  std::vector<int> seen_steps;
  std::vector<Matrix> seen_x;
  Rng rng(5);
  const Matrix out = sample_window(shrink, schedule, 4, 2, {}, std::nullopt, std::nullopt, Vector::Zero(1), {1.0, 1.0},
                                   rng, [&](int n, const Matrix& x, const Matrix&) {
                                     seen_steps.push_back(n);
                                     seen_x.push_back(x);
                                   });
  EXPECT_EQ(seen_steps, (std::vector<int>{5, 4, 3, 2, 1}));

  Rng script(5);
  Matrix x = script.normal_matrix(4, 2);
  for (int n = 5; n >= 1; --n) {
    EXPECT_LT((x - seen_x[5 - n]).cwiseAbs().maxCoeff(), 1e-12) << "n=" << n;
    const Matrix x0 = 0.3 * x.array().tanh() + 0.01 * (n - 1);
    const double ab = schedule.alpha_bar(n), ab_prev = schedule.alpha_bar(n - 1);
    const double beta = 1.0 - ab / ab_prev;
    const Matrix mean = std::sqrt(ab_prev) * beta / (1 - ab) * x0 + std::sqrt(ab / ab_prev) * (1 - ab_prev) / (1 - ab) * x;
    if (n > 1)
      x = mean + std::sqrt(beta * (1 - ab_prev) / (1 - ab)) * script.normal_matrix(4, 2);
    else
      x = mean;
  }
  EXPECT_LT((out - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, ContextRowsAreCopiedVerbatim) {
  const auto tpl = make_toy_template();
  auto c = tiny_denoiser_config(tpl, 8, 2);
  c.steps = 4;
  Denoiser d(c);
  stylediff::testing::randomize(d.parameters(), 6);
  Rng rng(7);
  const WindowContext ctx{rng.normal_matrix(2, c.audio_dim), rng.normal_matrix(2, c.motion_dim), false};
  const Matrix out = sample_window(denoise_fn(d), NoiseSchedule::cosine(4), 8, c.motion_dim, ctx,
                                   Matrix(rng.normal_matrix(8, c.audio_dim)), std::nullopt,
                                   Vector::Zero(c.shape_dim), {1.15, 3.0}, rng);
  ASSERT_EQ(out.rows(), 10);
  EXPECT_EQ(out.topRows(2), ctx.prev_motion);
}

class WindowChaining : public ::testing::Test {
 protected:
  void SetUp() override {
    config = tiny_denoiser_config(tpl, 100, 10);
    config.steps = 3;
    denoiser = std::make_unique<Denoiser>(config);
    stylediff::testing::randomize(denoiser->parameters(), 8);
    Rng rng(9);
    features = rng.normal_matrix(300, config.audio_dim);
    beta = Vector::Zero(config.shape_dim);
  }

  Matrix run(Eigen::Index frames, std::uint64_t seed, std::vector<WindowRecord>* records = nullptr) {
    GenerateOptions opts;
    opts.seed = seed;
    if (records) opts.on_window = [records](const WindowRecord& r) { records->push_back(r); };
    return generate_from_features(denoise_fn(*denoiser), NoiseSchedule::cosine(3), config.window, config.context,
                                  config.motion_dim, features, frames, beta, std::nullopt, opts);
  }

  FaceTemplate tpl = make_toy_template();
  DenoiserConfig config;
  std::unique_ptr<Denoiser> denoiser;
  Matrix features;
  Vector beta;
};

TEST_F(WindowChaining, ShortSequenceUsesOneWindow) {
  std::vector<WindowRecord> records;
  const Matrix m = run(60, 1, &records);
  EXPECT_EQ(m.rows(), 60);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_TRUE(records[0].context.is_first);
  EXPECT_EQ(m, records[0].output.bottomRows(100).topRows(60));
}

TEST_F(WindowChaining, WindowsHandOverTheirLastFrames) {
  std::vector<WindowRecord> records;
  const Matrix m = run(250, 2, &records);
  EXPECT_EQ(m.rows(), 250);
  ASSERT_EQ(records.size(), 3u);
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& ctx = records[k].context;
    EXPECT_FALSE(ctx.is_first);
    const Matrix prev_current = records[k - 1].output.bottomRows(100);
    EXPECT_EQ(ctx.prev_motion, prev_current.middleRows(90, 10));
    EXPECT_EQ(ctx.prev_audio, features.middleRows(100 * k - 10, 10));
    EXPECT_EQ(records[k].output.topRows(10), ctx.prev_motion);
    const Eigen::Index keep = std::min<Eigen::Index>(100, 250 - 100 * static_cast<Eigen::Index>(k));
    EXPECT_EQ(m.middleRows(100 * k, keep), records[k].output.bottomRows(100).topRows(keep));
  }
  EXPECT_EQ(m.topRows(100), records[0].output.bottomRows(100));
}

TEST_F(WindowChaining, SeedsAndLengths) {
  const Matrix a = run(250, 3), b = run(250, 3), c = run(250, 4);
  EXPECT_EQ(a, b);
  EXPECT_GT((a - c).cwiseAbs().maxCoeff(), 1e-6);
  const Matrix shorter = run(150, 3);
  EXPECT_EQ(shorter, a.topRows(150));
  EXPECT_THROW(run(0, 1), ParameterError);
  features = features.topRows(200);
  EXPECT_THROW(run(250, 1), ParameterError);
}

TEST(Generate, EndToEndShapesAndErrors) {
  const auto tpl = make_toy_template();
  auto c = tiny_denoiser_config(tpl, 20, 4);
  c.steps = 2;
  StyleDiffModel model(c, std::make_unique<ToyConvEncoder>());
  const auto clip = make_toy_clip(1, 0, 0, 45);
  const auto m = generate(model, clip.audio, clip.beta, std::nullopt, frames_for_audio(clip.audio));
  EXPECT_EQ(m.length(), 45);
  EXPECT_EQ(m.dim(), tpl.motion_dim());
  EXPECT_TRUE(m.frames.allFinite());
  EXPECT_THROW(generate(model, AudioClip{}, clip.beta, std::nullopt, 10), InputError);
  EXPECT_EQ(frames_for_audio(AudioClip{std::vector<double>(16000, 0.0), 16000}), 25);
  EXPECT_EQ(frames_for_audio(AudioClip{std::vector<double>(10, 0.0), 16000}), 1);
}
