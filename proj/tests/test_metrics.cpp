#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace stylediff;
using namespace stylediff::metrics;

namespace {

MeshSequence constant_sequence(const Matrix& mesh, Eigen::Index frames) {
  MeshSequence s{Matrix(frames, 3 * mesh.rows())};
  for (Eigen::Index t = 0; t < frames; ++t)
    for (Eigen::Index v = 0; v < mesh.rows(); ++v) s.positions.block(t, 3 * v, 1, 3) = mesh.row(v);
  return s;
}

/// Head track rotating about z with a periodic angular speed; speed minima at
/// i = period/2 + k * period.
Matrix periodic_head_track(Eigen::Index frames, int period, int shift = 0) {
  Matrix poses = Matrix::Zero(frames, 3);
  double angle = 0.0;
  for (Eigen::Index t = 1; t < frames; ++t) {
    const double i = static_cast<double>(t - 1 - shift);
    angle += 0.05 + 0.04 * std::cos(2.0 * M_PI * i / period);
    poses(t, 2) = angle - 2.0 * M_PI * std::floor(angle / (2.0 * M_PI) + 0.5);
  }
  return poses;
}

}  // namespace

TEST(Metrics, BruteForceOracles) {
  const auto tpl = make_toy_template();
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index T = 3 + trial % 5;
    const Eigen::Index V = tpl.vertex_count();
    const MeshSequence a{0.01 * rng.normal_matrix(T, 3 * V)}, b{0.01 * rng.normal_matrix(T, 3 * V)};
    const Matrix ref = 0.01 * rng.normal_matrix(V, 3);

    double lve_sum = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      double worst = 0.0;
      for (int v : tpl.lip_indices) {
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) sq += std::pow(a.positions(t, 3 * v + k) - b.positions(t, 3 * v + k), 2);
        worst = std::max(worst, std::sqrt(sq));
      }
      lve_sum += worst;
    }
    EXPECT_NEAR(lve(a, b, tpl.lip_indices), 1000.0 * lve_sum / T, 1e-9);

    auto dyn = [&](const MeshSequence& s, int v) {
      std::vector<double> d(T);
      double mean = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) {
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) sq += std::pow(s.positions(t, 3 * v + k) - ref(v, k), 2);
        d[t] = std::sqrt(sq);
        mean += d[t] / T;
      }
      double var = 0.0;
      for (double x : d) var += (x - mean) * (x - mean) / T;
      return std::sqrt(var);
    };
    double fdd_sum = 0.0;
    for (int v : tpl.upper_face_indices) fdd_sum += dyn(a, v) - dyn(b, v);
    EXPECT_NEAR(fdd(a, b, ref, tpl.upper_face_indices), fdd_sum / tpl.upper_face_indices.size() / 1e-5, 1e-9);

    double mod_sum = 0.0;
    const int up = tpl.mouth_pair[0], lo = tpl.mouth_pair[1];
    for (Eigen::Index t = 0; t < T; ++t) {
      auto gap = [&](const MeshSequence& s) {
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) sq += std::pow(s.positions(t, 3 * up + k) - s.positions(t, 3 * lo + k), 2);
        return std::sqrt(sq);
      };
      mod_sum += std::abs(gap(a) - gap(b));
    }
    EXPECT_NEAR(mod(a, b, tpl), 1000.0 * mod_sum / T, 1e-9);

    std::vector<Matrix> samples{rng.normal_matrix(T, 7), rng.normal_matrix(T, 7), rng.normal_matrix(T, 7)};
    const std::vector<int> dims{0, 2, 5};
    double div = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
          double sq = 0.0;
          for (int d : dims) sq += std::pow(samples[i](t, d) - samples[j](t, d), 2);
          acc += std::sqrt(sq);
        }
        div += acc / T / 3.0;
      }
    EXPECT_NEAR(diversity(samples, dims), div, 1e-9);
  }
}

TEST(Metrics, LipVertexErrorExample) {
  const auto tpl = make_toy_template();
  const Matrix neutral = tpl.template_vertices;
  const auto gt = constant_sequence(neutral, 4);
  auto pred = gt;
  for (int v : tpl.lip_indices) pred.positions.col(3 * v + 1).array() += 0.0025;
  EXPECT_NEAR(lve(pred, gt, tpl.lip_indices), 2.5, 1e-9);
  EXPECT_EQ(lve(gt, gt, tpl.lip_indices), 0.0);
  EXPECT_THROW(lve(pred, constant_sequence(neutral, 3), tpl.lip_indices), ParameterError);
  EXPECT_THROW(lve(pred, gt, {}), ParameterError);
}

TEST(Metrics, UpperFaceDynamicsExample) {
  // One upper-face vertex alternates between two distances a apart; its
  // temporal std is a/2 and every other vertex is static.
  const auto tpl = make_toy_template();
  const Matrix neutral = tpl.template_vertices;
  const auto gt = constant_sequence(neutral, 6);
  auto pred = gt;
  const int v = tpl.upper_face_indices.front();
  const double a = 3e-5;
  for (Eigen::Index t = 1; t < 6; t += 2) pred.positions(t, 3 * v + 0) += a;
  const double want = a / (2.0 * tpl.upper_face_indices.size()) / 1e-5;
  EXPECT_NEAR(fdd(pred, gt, neutral, tpl.upper_face_indices), want, 1e-9);
  EXPECT_NEAR(fdd(gt, pred, neutral, tpl.upper_face_indices), -want, 1e-9);
  EXPECT_THROW(fdd(constant_sequence(neutral, 1), constant_sequence(neutral, 1), neutral, tpl.upper_face_indices),
               ParameterError);
}

TEST(Metrics, MouthOpeningDifferenceExample) {
  const auto tpl = make_toy_template();
  Matrix neutral = tpl.template_vertices;
  const auto gt = constant_sequence(neutral, 5);
  const Vec3 up = neutral.row(tpl.mouth_pair[0]).transpose(), lo = neutral.row(tpl.mouth_pair[1]).transpose();
  const Vec3 dir = (lo - up).normalized();
  Matrix opened = neutral;
  opened.row(tpl.mouth_pair[1]) += 0.002 * dir.transpose();
  EXPECT_NEAR(mod(constant_sequence(opened, 5), gt, tpl), 2.0, 1e-9);
}

TEST(Metrics, BeatAlignmentScore) {
  EXPECT_NEAR(beat_alignment_score({13, 30}, {10, 30}), 0.5 * (std::exp(-0.5) + 1.0), 1e-12);
  EXPECT_NEAR(beat_alignment_score({13, 30}, {10, 30}), 0.8033, 1e-4);
  EXPECT_EQ(beat_alignment_score({}, {10}), 0.0);
  EXPECT_EQ(beat_alignment_score({10}, {}), 0.0);
  EXPECT_EQ(beat_alignment_score({4, 9}, {4, 9}), 1.0);
}

TEST(Metrics, MinimaAndProminence) {
  Vector s(9);
  s << 5, 3, 4, 1, 4, 4.5, 2, 6, 6;
  EXPECT_DOUBLE_EQ(minimum_prominence(s, 1), 1.0);
  EXPECT_DOUBLE_EQ(minimum_prominence(s, 3), 4.0);
  EXPECT_DOUBLE_EQ(minimum_prominence(s, 6), 2.5);
  EXPECT_EQ(detect_minima(s, 0.01), (std::vector<int>{1, 3, 6}));
  EXPECT_EQ(detect_minima(s, 0.5), (std::vector<int>{3}));
  Vector plateau(6);
  plateau << 3, 1, 1, 1, 3, 3;
  EXPECT_EQ(detect_minima(plateau, 0.1), (std::vector<int>{1}));
  EXPECT_TRUE(detect_minima(Vector::Constant(5, 1.0), 0.1).empty());
}

TEST(Metrics, HeadBeatsOfAPeriodicTrack) {
  const Matrix poses = periodic_head_track(80, 20);
  const auto speed = angular_speed(poses);
  ASSERT_EQ(speed.size(), 79);
  EXPECT_NEAR(speed(0), 0.09, 1e-9);
  EXPECT_EQ(head_beats(poses), (std::vector<int>{10, 30, 50, 70}));
  EXPECT_NEAR(beat_align(poses, poses), 1.0, 1e-15);
  EXPECT_EQ(beat_align(Matrix::Zero(80, 3), poses), 0.0);
  EXPECT_NEAR(beat_align(periodic_head_track(80, 20, 3), poses), std::exp(-0.5), 1e-9);
}

TEST(Metrics, DiversityExamples) {
  Rng rng(2);
  const Matrix a = rng.normal_matrix(10, 4);
  const double c = 0.7;
  const Matrix b = (a.array() + c).matrix();
  EXPECT_NEAR(diversity({a, b}, {0, 1, 2, 3}), c * 2.0, 1e-12);
  EXPECT_EQ(diversity({a, a}, {0, 1}), 0.0);
  EXPECT_THROW(diversity({a}, {0}), ParameterError);
  EXPECT_THROW(diversity({a, b}, {4}), ParameterError);
  const auto tpl = make_toy_template();
  EXPECT_EQ(expression_dims(tpl).size(), static_cast<std::size_t>(tpl.expression_dim()));
  EXPECT_EQ(head_pose_dims(tpl), (std::vector<int>{tpl.motion_dim() - 3, tpl.motion_dim() - 2, tpl.motion_dim() - 1}));
}

TEST(Metrics, SelfComparisonIsPerfect) {
  const auto tpl = make_toy_template();
  const auto clip = make_toy_clip(4, 1, 0, 120);
  const auto r = evaluate_motion(tpl, clip.beta, clip.motion, clip.motion);
  EXPECT_EQ(r.lve_mm, 0.0);
  EXPECT_EQ(r.fdd_1e5m, 0.0);
  EXPECT_EQ(r.mod_mm, 0.0);
  ASSERT_TRUE(r.ba.has_value());
  EXPECT_EQ(*r.ba, 1.0);
  const auto mesh = zero_pose_mesh_sequence(tpl, clip.beta, clip.motion);
  const auto rm = evaluate_meshes(tpl, tpl.template_vertices, mesh, mesh);
  EXPECT_EQ(rm.lve_mm, 0.0);
  EXPECT_FALSE(rm.ba.has_value());
}
