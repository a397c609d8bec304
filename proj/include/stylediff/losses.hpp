#pragma once

// Training objective: parameter-space MSE plus vertex, velocity and
// smoothness terms on zero-pose meshes, and the same three terms on posed
// meshes for head motion. Every squared norm is a per-element mean.

#include "stylediff/autograd/tensor.hpp"
#include "stylediff/core/config_file.hpp"
#include "stylediff/face_model.hpp"

namespace stylediff {

struct LossWeights {
  double vert = 2e6;
  double vel = 1e7;
  double smooth = 1e5;
  double head_vert = 2e6;
  double head_vel = 1e7;
  double head_smooth = 1e5;

  void validate() const {
    for (double w : {vert, vel, smooth, head_vert, head_vel, head_smooth})
      detail::require<ParameterError>(w >= 0.0 && std::isfinite(w), "loss weights must be finite and nonnegative");
  }

  static LossWeights zero() { return {0, 0, 0, 0, 0, 0}; }

  static LossWeights from_kv(const KeyValueConfig& kv) { return from_kv(kv, LossWeights{}); }

  static LossWeights from_kv(const KeyValueConfig& kv, LossWeights w) {
    w.vert = kv.get_double("loss.vert", w.vert);
    w.vel = kv.get_double("loss.vel", w.vel);
    w.smooth = kv.get_double("loss.smooth", w.smooth);
    w.head_vert = kv.get_double("loss.head_vert", w.head_vert);
    w.head_vel = kv.get_double("loss.head_vel", w.head_vel);
    w.head_smooth = kv.get_double("loss.head_smooth", w.head_smooth);
    w.validate();
    return w;
  }

  void write(KeyValueConfig& kv) const {
    kv.set("loss.vert", vert);
    kv.set("loss.vel", vel);
    kv.set("loss.smooth", smooth);
    kv.set("loss.head_vert", head_vert);
    kv.set("loss.head_vel", head_vel);
    kv.set("loss.head_smooth", head_smooth);
  }
};

namespace ag {

/// Row t of the result is a(t+1) - a(t).
inline Var temporal_diff(const Var& a) {
  detail::require<ParameterError>(a.rows() >= 2, "temporal_diff: need at least two rows");
  return slice_rows(a, 1, a.rows() - 1) - slice_rows(a, 0, a.rows() - 1);
}

}  // namespace ag

inline Matrix temporal_diff(const Matrix& a) {
  detail::require<ParameterError>(a.rows() >= 2, "temporal_diff: need at least two rows");
  return a.bottomRows(a.rows() - 1) - a.topRows(a.rows() - 1);
}

namespace detail {

inline void require_same(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ParameterError(std::string(what) + ": shape mismatch");
}

inline double mean_sq(const Matrix& m) { return m.size() == 0 ? 0.0 : m.squaredNorm() / static_cast<double>(m.size()); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain evaluation

inline double loss_simple(const Matrix& pred, const Matrix& target) {
  detail::require_same(pred, target, "loss_simple");
  return detail::mean_sq(pred - target);
}

/// Mesh sequences are T x 3N_v.
inline double loss_vert(const Matrix& target_mesh, const Matrix& pred_mesh) {
  detail::require_same(pred_mesh, target_mesh, "loss_vert");
  return detail::mean_sq(pred_mesh - target_mesh);
}

inline double loss_vel(const Matrix& target_mesh, const Matrix& pred_mesh) {
  detail::require_same(pred_mesh, target_mesh, "loss_vel");
  return detail::mean_sq(temporal_diff(pred_mesh) - temporal_diff(target_mesh));
}

inline double loss_smooth(const Matrix& pred_mesh) {
  detail::require<ParameterError>(pred_mesh.rows() >= 3, "loss_smooth: need at least three frames");
  return detail::mean_sq(temporal_diff(temporal_diff(pred_mesh)));
}

struct LossTerms {
  double simple = 0, vert = 0, vel = 0, smooth = 0, head_vert = 0, head_vel = 0, head_smooth = 0;

  double head(const LossWeights& w) const {
    return w.head_vert * head_vert + w.head_vel * head_vel + w.head_smooth * head_smooth;
  }
  double total(const LossWeights& w) const {
    return simple + w.vert * vert + w.vel * vel + w.smooth * smooth + head(w);
  }
};

/// Individual terms for one prediction/target pair of motion windows.
/// Velocity terms need two frames and smoothness three; shorter windows
/// contribute zero for those terms.
inline LossTerms loss_terms(const FaceTemplate& tpl, const Vector& beta, const Matrix& target, const Matrix& pred) {
  detail::require_same(pred, target, "loss_terms");
  LossTerms t;
  t.simple = loss_simple(pred, target);
  const auto face_gt = zero_pose_mesh_sequence(tpl, beta, {target}).positions;
  const auto face_pred = zero_pose_mesh_sequence(tpl, beta, {pred}).positions;
  const auto head_gt = posed_mesh_sequence(tpl, beta, {target}).positions;
  const auto head_pred = posed_mesh_sequence(tpl, beta, {pred}).positions;
  t.vert = loss_vert(face_gt, face_pred);
  t.head_vert = loss_vert(head_gt, head_pred);
  if (pred.rows() >= 2) {
    t.vel = loss_vel(face_gt, face_pred);
    t.head_vel = loss_vel(head_gt, head_pred);
  }
  if (pred.rows() >= 3) {
    t.smooth = loss_smooth(face_pred);
    t.head_smooth = loss_smooth(head_pred);
  }
  return t;
}

inline double loss_head(const FaceTemplate& tpl, const Vector& beta, const Matrix& target, const Matrix& pred,
                        const LossWeights& w) {
  return loss_terms(tpl, beta, target, pred).head(w);
}

inline double total_loss(const FaceTemplate& tpl, const Vector& beta, const Matrix& target, const Matrix& pred,
                         const LossWeights& w) {
  return loss_terms(tpl, beta, target, pred).total(w);
}

// ---------------------------------------------------------------------------
// Differentiable form (gradient flows into `pred` only)

inline ag::Var total_loss_var(const FaceTemplate& tpl, const Vector& beta, const Matrix& target, const ag::Var& pred,
                              const LossWeights& w) {
  detail::require_same(pred.value(), target, "total_loss");
  const auto T = target.rows();
  const ag::Var gt = ag::Var::constant(target);
  ag::Var loss = ag::mse(pred, gt);

  auto geometric = [&](bool zero_head_pose, double wv, double wvel, double wsm) {
    if (wv == 0.0 && wvel == 0.0 && wsm == 0.0) return;
    const Matrix m_gt = mesh_sequence(tpl, beta, {target}, zero_head_pose).positions;
    const ag::Var m_pred = mesh_sequence_op(tpl, beta, pred, zero_head_pose);
    if (wv != 0.0) loss = loss + wv * ag::mse(m_pred, ag::Var::constant(m_gt));
    if (wvel != 0.0 && T >= 2)
      loss = loss + wvel * ag::mse(ag::temporal_diff(m_pred), ag::Var::constant(temporal_diff(m_gt)));
    if (wsm != 0.0 && T >= 3) loss = loss + wsm * ag::mean_square(ag::temporal_diff(ag::temporal_diff(m_pred)));
  };
  geometric(true, w.vert, w.vel, w.smooth);
  geometric(false, w.head_vert, w.head_vel, w.head_smooth);
  return loss;
}

}  // namespace stylediff
