#pragma once

// Evaluation metrics. Mesh positions are in metres; LVE and MOD are reported
// in millimetres and FDD in units of 1e-5 m.

#include "stylediff/face_model.hpp"

#include <optional>
#include <vector>

namespace stylediff::metrics {

namespace detail {

inline void require_same_mesh(const MeshSequence& a, const MeshSequence& b, const char* what) {
  if (a.positions.rows() != b.positions.rows() || a.positions.cols() != b.positions.cols())
    throw ParameterError(std::string(what) + ": sequences differ in shape");
  if (a.positions.rows() < 1) throw ParameterError(std::string(what) + ": empty sequence");
}

inline void check_indices(const std::vector<int>& idx, Eigen::Index vertices, const char* what) {
  if (idx.empty()) throw ParameterError(std::string(what) + ": empty vertex set");
  for (int v : idx)
    if (v < 0 || v >= vertices) throw ParameterError(std::string(what) + ": vertex index out of range");
}

}  // namespace detail

/// Lip vertex error: mean over frames of the largest lip-vertex L2 error, mm.
inline double lve(const MeshSequence& pred, const MeshSequence& gt, const std::vector<int>& lip) {
  detail::require_same_mesh(pred, gt, "lve");
  detail::check_indices(lip, gt.vertex_count(), "lve");
  double sum = 0.0;
  for (Eigen::Index t = 0; t < gt.frames(); ++t) {
    double worst = 0.0;
    for (int v : lip) worst = std::max(worst, (pred.vertex(t, v) - gt.vertex(t, v)).norm());
    sum += worst;
  }
  return 1000.0 * sum / static_cast<double>(gt.frames());
}

/// Temporal population standard deviation of |p_t(v) - ref(v)|.
inline double vertex_dynamics(const MeshSequence& seq, const Matrix& reference, int v) {
  const auto T = seq.frames();
  Vector mag(T);
  const Vec3 r = reference.row(v).transpose();
  for (Eigen::Index t = 0; t < T; ++t) mag(t) = (seq.vertex(t, v) - r).norm();
  const double mean = mag.mean();
  return std::sqrt((mag.array() - mean).square().mean());
}

/// Upper-face dynamics deviation, mean over upper-face vertices of
/// dyn(pred) - dyn(gt), in 1e-5 m. `reference` is the N_v x 3 neutral mesh
/// displacements are measured from.
inline double fdd(const MeshSequence& pred, const MeshSequence& gt, const Matrix& reference,
                  const std::vector<int>& upper) {
  detail::require_same_mesh(pred, gt, "fdd");
  if (gt.frames() < 2) throw ParameterError("fdd: need at least two frames");
  detail::check_indices(upper, gt.vertex_count(), "fdd");
  if (reference.rows() != gt.vertex_count() || reference.cols() != 3)
    throw ParameterError("fdd: reference mesh does not match sequences");
  double sum = 0.0;
  for (int v : upper) sum += vertex_dynamics(pred, reference, v) - vertex_dynamics(gt, reference, v);
  return sum / static_cast<double>(upper.size()) / 1e-5;
}

/// Mouth opening difference: mean absolute lip-gap difference, mm.
inline double mod(const MeshSequence& pred, const MeshSequence& gt, const FaceTemplate& tpl) {
  detail::require_same_mesh(pred, gt, "mod");
  double sum = 0.0;
  for (Eigen::Index t = 0; t < gt.frames(); ++t)
    sum += std::abs(mouth_opening(tpl, pred.frame(t)) - mouth_opening(tpl, gt.frame(t)));
  return 1000.0 * sum / static_cast<double>(gt.frames());
}

// ---------------------------------------------------------------------------
// Head-motion beats

/// Rotation angle between consecutive global rotations, T-1 values (rad/frame).
inline Vector angular_speed(const Matrix& poses) {
  stylediff::detail::require<ParameterError>(poses.cols() == 3, "angular_speed: poses must be T x 3 axis-angle");
  stylediff::detail::require<ParameterError>(poses.rows() >= 2, "angular_speed: need at least two frames");
  Vector speed(poses.rows() - 1);
  Mat3 prev = rodrigues(poses.row(0).transpose());
  for (Eigen::Index t = 1; t < poses.rows(); ++t) {
    Mat3 cur = rodrigues(poses.row(t).transpose());
    speed(t - 1) = relative_angle(prev, cur);
    prev = cur;
  }
  return speed;
}

/// Topographic prominence of the local minimum at i: the smaller of the two
/// highest values reached before the signal drops below signal(i) on either
/// side (or ends), minus signal(i).
inline double minimum_prominence(const Vector& signal, Eigen::Index i) {
  const double v = signal(i);
  double left = v;
  for (Eigen::Index j = i - 1; j >= 0 && signal(j) >= v; --j) left = std::max(left, signal(j));
  double right = v;
  for (Eigen::Index j = i + 1; j < signal.size() && signal(j) >= v; ++j) right = std::max(right, signal(j));
  return std::min(left, right) - v;
}

/// Strict interior local minima of `signal` whose prominence is at least
/// `relative_prominence` times the signal maximum. Plateau minima count once,
/// at their first sample.
inline std::vector<int> detect_minima(const Vector& signal, double relative_prominence) {
  std::vector<int> out;
  if (signal.size() < 3) return out;
  const double threshold = relative_prominence * signal.maxCoeff();
  if (!(threshold > 0.0)) return out;
  for (Eigen::Index i = 1; i + 1 < signal.size(); ++i) {
    if (!(signal(i) < signal(i - 1))) continue;
    Eigen::Index j = i;
    while (j + 1 < signal.size() && signal(j + 1) == signal(i)) ++j;
    if (j + 1 >= signal.size() || !(signal(j + 1) > signal(i))) continue;
    if (minimum_prominence(signal, i) >= threshold) out.push_back(static_cast<int>(i));
  }
  return out;
}

/// Beats of a T x 3 global-rotation track: local minima of angular speed.
inline std::vector<int> head_beats(const Matrix& poses, double relative_prominence = 0.1) {
  return detect_minima(angular_speed(poses), relative_prominence);
}

/// Mean over ground-truth beats of exp(-dt^2 / (2 sigma^2)), dt the distance
/// to the nearest predicted beat; 0 if either side has no beats.
inline double beat_alignment_score(const std::vector<int>& pred_beats, const std::vector<int>& gt_beats,
                                   double sigma = 3.0) {
  if (pred_beats.empty() || gt_beats.empty()) return 0.0;
  double sum = 0.0;
  for (int g : gt_beats) {
    double best = std::numeric_limits<double>::infinity();
    for (int p : pred_beats) best = std::min(best, std::abs(static_cast<double>(p - g)));
    sum += std::exp(-best * best / (2.0 * sigma * sigma));
  }
  return sum / static_cast<double>(gt_beats.size());
}

inline double beat_align(const Matrix& pred_poses, const Matrix& gt_poses, double sigma = 3.0,
                         double relative_prominence = 0.1) {
  stylediff::detail::require<ParameterError>(pred_poses.rows() == gt_poses.rows(), "beat_align: tracks differ in length");
  stylediff::detail::require<ParameterError>(gt_poses.rows() >= 3, "beat_align: need at least three frames");
  return beat_alignment_score(head_beats(pred_poses, relative_prominence), head_beats(gt_poses, relative_prominence),
                              sigma);
}

// ---------------------------------------------------------------------------
// Diversity

/// Mean over unordered sample pairs of the per-frame L2 distance restricted to
/// `dims`, averaged over frames.
inline double diversity(const std::vector<Matrix>& samples, const std::vector<int>& dims) {
  stylediff::detail::require<ParameterError>(samples.size() >= 2, "diversity: need at least two samples");
  stylediff::detail::require<ParameterError>(!dims.empty(), "diversity: empty dimension subset");
  const auto T = samples.front().rows();
  const auto D = samples.front().cols();
  for (const auto& s : samples)
    stylediff::detail::require<ParameterError>(s.rows() == T && s.cols() == D && T >= 1, "diversity: samples differ in shape");
  for (int d : dims) stylediff::detail::require<ParameterError>(d >= 0 && d < D, "diversity: dimension out of range");
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) {
        double sq = 0.0;
        for (int d : dims) {
          const double diff = samples[a](t, d) - samples[b](t, d);
          sq += diff * diff;
        }
        acc += std::sqrt(sq);
      }
      sum += acc / static_cast<double>(T);
      ++pairs;
    }
  }
  return sum / pairs;
}

inline std::vector<int> expression_dims(const FaceTemplate& tpl) {
  std::vector<int> d(tpl.expression_dim());
  for (int i = 0; i < tpl.expression_dim(); ++i) d[i] = i;
  return d;
}

inline std::vector<int> head_pose_dims(const FaceTemplate& tpl) {
  const int base = tpl.motion_dim() - 3;
  return {base, base + 1, base + 2};
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  double lve_mm = 0.0;
  double fdd_1e5m = 0.0;
  double mod_mm = 0.0;
  std::optional<double> ba;       // needs motion parameters
  std::optional<double> div_exp;  // needs several samples
  std::optional<double> div_hp;
};

/// Facial metrics on zero-pose meshes, beat alignment on the global rotation.
inline EvalReport evaluate_motion(const FaceTemplate& tpl, const Vector& beta, const MotionSequence& pred,
                                  const MotionSequence& gt) {
  stylediff::detail::require<ParameterError>(pred.length() == gt.length() && pred.dim() == gt.dim(),
                                  "evaluate: sequences differ in shape");
  const auto mp = zero_pose_mesh_sequence(tpl, beta, pred);
  const auto mg = zero_pose_mesh_sequence(tpl, beta, gt);
  const Matrix neutral = construct_mesh(tpl, beta, MotionParams::zero(tpl.expression_dim()));
  EvalReport r;
  r.lve_mm = lve(mp, mg, tpl.lip_indices);
  r.fdd_1e5m = gt.length() >= 2 ? fdd(mp, mg, neutral, tpl.upper_face_indices) : 0.0;
  r.mod_mm = mod(mp, mg, tpl);
  if (gt.length() >= 3) r.ba = beat_align(pred.frames.rightCols(3), gt.frames.rightCols(3));
  return r;
}

/// Mesh-only evaluation (no beat alignment).
inline EvalReport evaluate_meshes(const FaceTemplate& tpl, const Matrix& reference, const MeshSequence& pred,
                                  const MeshSequence& gt) {
  EvalReport r;
  r.lve_mm = lve(pred, gt, tpl.lip_indices);
  r.fdd_1e5m = gt.frames() >= 2 ? fdd(pred, gt, reference, tpl.upper_face_indices) : 0.0;
  r.mod_mm = mod(pred, gt, tpl);
  return r;
}

}  // namespace stylediff::metrics
