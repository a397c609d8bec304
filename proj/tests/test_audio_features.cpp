#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace stylediff;

namespace {

AudioClip noise_clip(std::uint64_t seed, double seconds, int rate = kCanonicalSampleRate) {
  Rng rng(seed);
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (auto& s : c.samples) s = 0.3 * rng.normal();
  return c;
}

/// Independent piecewise-linear evaluation of raw at fractional position p.
double lerp_at(const Matrix& raw, double p, Eigen::Index col) {
  const auto n = raw.rows();
  if (p <= 0) return raw(0, col);
  if (p >= n - 1) return raw(n - 1, col);
  const auto i = static_cast<Eigen::Index>(p);
  const double f = p - i;
  return raw(i, col) + f * (raw(i + 1, col) - raw(i, col));
}

}  // namespace

TEST(AudioFeatures, FourSecondsGiveOneHundredFrames) {
  ToyConvEncoder enc;
  const auto f = enc.encode(noise_clip(1, 4.0), 100);
  EXPECT_EQ(f.features.rows(), 100);
  EXPECT_EQ(f.features.cols(), 32);
  EXPECT_EQ(f.frame_rate, 25.0);
  EXPECT_TRUE(f.features.allFinite());
}

TEST(AudioFeatures, SilenceGivesConstantFeatures) {
  ToyConvEncoder enc;
  AudioClip silence{std::vector<double>(32000, 0.0), kCanonicalSampleRate};
  const Matrix f = enc.encode(silence, 50).features;
  for (Eigen::Index t = 1; t < f.rows(); ++t) EXPECT_LT((f.row(t) - f.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AudioFeatures, ShortAudioIsZeroPaddedBeforeEncoding) {
  ToyConvEncoder enc;
  const auto one_second = noise_clip(2, 1.0);
  AudioClip padded = one_second;
  padded.samples.resize(4 * kCanonicalSampleRate, 0.0);
  const Matrix a = enc.encode(one_second, 100).features;
  const Matrix b = enc.encode(padded, 100).features;
  EXPECT_EQ(a, b);
}

TEST(AudioFeatures, EncodingIsDeterministic) {
  ToyConvEncoder enc;
  const auto clip = noise_clip(3, 2.0);
  EXPECT_EQ(enc.encode(clip, 50).features, enc.encode(clip, 50).features);
  ToyConvEncoder other;
  EXPECT_EQ(enc.encode(clip, 50).features, other.encode(clip, 50).features);
}

TEST(AudioFeatures, EncodeRejectsBadInput) {
  ToyConvEncoder enc;
  EXPECT_THROW(enc.encode(AudioClip{}, 10), InputError);
  EXPECT_THROW(enc.encode(noise_clip(4, 1.0), 0), ParameterError);
}

TEST(AudioFeatures, OtherSampleRatesAreConverted) {
  ToyConvEncoder enc;
  const auto f = enc.encode(noise_clip(5, 2.0, 8000), 50);
  EXPECT_EQ(f.features.rows(), 50);
  EXPECT_TRUE(f.features.allFinite());
}

TEST(AudioFeatures, ResampleIdentity) {
  Rng rng(6);
  const Matrix raw = rng.normal_matrix(9, 4);
  EXPECT_EQ(resample_features(raw, 9), raw);
}

TEST(AudioFeatures, ResampleMidpoint) {
  Matrix raw(2, 1);
  raw << 0.0, 2.0;
  const Matrix out = resample_features(raw, 3);
  ASSERT_EQ(out.rows(), 3);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(2, 0), 2.0);
}

TEST(AudioFeatures, ResampleMatchesPiecewiseLinearOracle) {
  Rng rng(7);
  const Matrix raw = rng.normal_matrix(7, 3);
  const Matrix out = resample_features(raw, 25);
  for (Eigen::Index i = 0; i < 25; ++i) {
    const double p = i * 6.0 / 24.0;
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(out(i, c), lerp_at(raw, p, c), 1e-6);
  }
}

TEST(AudioFeatures, ResamplePreservesConstantsAndIsLinear) {
  Rng rng(8);
  const Matrix constant = Matrix::Constant(11, 2, 0.7);
  const Matrix out = resample_features(constant, 17);
  EXPECT_LT((out.array() - 0.7).abs().maxCoeff(), 1e-15);
  const Matrix a = rng.normal_matrix(11, 2), b = rng.normal_matrix(11, 2);
  const Matrix lhs = resample_features(Matrix(2.0 * a + 3.0 * b), 17);
  const Matrix rhs = 2.0 * resample_features(a, 17) + 3.0 * resample_features(b, 17);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AudioFeatures, ResampleRejectsZeroTarget) {
  EXPECT_THROW(resample_features(Matrix::Ones(3, 1), 0), ParameterError);
}

TEST(AudioFeatures, PeakNormalize) {
  AudioClip loud{{0.5, -4.0, 2.0}, 16000};
  const auto n = peak_normalize(loud);
  EXPECT_DOUBLE_EQ(n.samples[1], -1.0);
  EXPECT_DOUBLE_EQ(n.samples[0], 0.125);
  AudioClip quiet{{0.5, -0.25}, 16000};
  EXPECT_EQ(peak_normalize(quiet).samples, quiet.samples);
}

TEST(AudioFeatures, WavRoundTripWithinQuantisation) {
  const auto dir = stylediff::testing::scratch_dir("wav");
  auto clip = noise_clip(9, 0.5);
  for (auto& s : clip.samples) s = std::clamp(s, -1.0, 0.99);
  write_wav(dir / "a.wav", clip);
  const auto back = read_wav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate, clip.sample_rate);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32768.0);
}

TEST(AudioFeatures, ReadWavRejectsGarbage) {
  const auto dir = stylediff::testing::scratch_dir("wav_bad");
  io::write_text_atomic(dir / "bad.wav", "not a wav file at all");
  EXPECT_THROW(read_wav(dir / "bad.wav"), DataError);
}

TEST(AudioFeatures, ToyEncoderReceivesGradients) {
  ToyConvEncoder enc;
  const ag::Var f = enc.encode_var(noise_clip(10, 1.0), 25);
  ag::backward(ag::mean_square(f));
  for (const auto& [name, p] : enc.parameters().entries()) {
    ASSERT_TRUE(p.has_grad()) << name;
    EXPECT_GT(p.grad().norm(), 0.0) << name;
  }
}

TEST(AudioFeatures, PretrainedAdapterFreezesOnlyTheFrontEnd) {
  PretrainedEncoderConfig cfg;
  cfg.frontend_channels = 8;
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.feature_dim = 12;
  PretrainedEncoderAdapter enc(cfg);
  enc.set_frontend_frozen(true);
  EXPECT_TRUE(enc.frontend_frozen());

  std::map<std::string, Matrix> before;
  for (const auto& [name, p] : enc.parameters().entries()) before[name] = p.value();
  nn::Adam opt(enc.parameters(), {.lr = 1e-2});
  ag::backward(ag::mean_square(enc.encode_var(noise_clip(11, 1.0), 25)));
  opt.step();

  int frontend = 0, transformer = 0;
  for (const auto& [name, p] : enc.parameters().entries()) {
    const bool changed = p.value() != before[name];
    if (name.rfind("frontend.", 0) == 0) {
      EXPECT_FALSE(changed) << name;
      ++frontend;
    } else {
      EXPECT_TRUE(changed) << name;
      ++transformer;
    }
  }
  EXPECT_GT(frontend, 0);
  EXPECT_GT(transformer, 0);
  EXPECT_EQ(enc.encode(noise_clip(12, 1.0), 25).features.cols(), 12);
}

TEST(AudioFeatures, EncoderKindFromEnvironment) {
  ::unsetenv("STYLEDIFF_ENCODER");
  EXPECT_EQ(default_encoder_kind(), "toy");
  ::setenv("STYLEDIFF_ENCODER", "pretrained", 1);
  EXPECT_EQ(default_encoder_kind(), "pretrained");
  ::setenv("STYLEDIFF_ENCODER", "bogus", 1);
  EXPECT_THROW(default_encoder_kind(), ParameterError);
  ::unsetenv("STYLEDIFF_ENCODER");
  EXPECT_EQ(make_encoder("toy", {})->kind(), "toy");
}
