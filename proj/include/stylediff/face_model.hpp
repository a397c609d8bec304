#pragma once

// Parametric face model: blendshape offsets followed by linear blend skinning
// around a small joint forest (root = global head rotation, plus a jaw).

#include "stylediff/autograd/tensor.hpp"
#include "stylediff/core/binary_io.hpp"
#include "stylediff/core/errors.hpp"
#include "stylediff/core/types.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace stylediff {

struct FaceTemplate {
  Matrix template_vertices;   // N_v x 3, meters
  std::vector<int> faces;     // flattened triangles, 3 indices each
  Matrix joint_positions;     // K x 3, meters
  std::vector<int> joint_parents;  // -1 marks the root
  Matrix shape_basis;         // (N_v*3) x D_beta; row = vertex*3 + axis
  Matrix expression_basis;    // (N_v*3) x D_psi
  Matrix skinning_weights;    // N_v x K, convex rows
  std::vector<int> lip_indices;
  std::vector<int> upper_face_indices;
  std::array<int, 2> mouth_pair{0, 0};  // {upper lip, lower lip}

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(joint_positions.rows()); }
  int shape_dim() const { return static_cast<int>(shape_basis.cols()); }
  int expression_dim() const { return static_cast<int>(expression_basis.cols()); }
  int motion_dim() const { return expression_dim() + 6; }

  int root_joint() const {
    for (int k = 0; k < joint_count(); ++k)
      if (joint_parents[k] < 0) return k;
    return 0;
  }

  /// Joint driven by the jaw rotation: index 2 in FLAME ordering (global,
  /// neck, jaw, eyes...) and index 1 for two-joint rigs.
  int jaw_joint() const { return joint_count() >= 3 ? 2 : 1; }

  /// Joints sorted so that every parent precedes its children.
  std::vector<int> joint_order() const {
    std::vector<int> order;
    std::vector<int> state(joint_count(), 0);
    for (int k = 0; k < joint_count(); ++k) {
      std::vector<int> chain;
      int j = k;
      while (j >= 0 && state[j] == 0) {
        state[j] = 1;
        chain.push_back(j);
        j = joint_parents[j];
      }
      if (j >= 0 && state[j] == 1) throw DataError("face template: joint hierarchy has a cycle");
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        state[*it] = 2;
        order.push_back(*it);
      }
    }
    return order;
  }

  void validate() const {
    const int nv = vertex_count();
    const int k = joint_count();
    auto fail = [](const std::string& m) { throw DataError("face template: " + m); };
    if (nv < 1 || template_vertices.cols() != 3) fail("template_vertices must be N_v x 3");
    if (k < 2) fail("need at least a root and a jaw joint");
    if (joint_positions.cols() != 3) fail("joint_positions must be K x 3");
    if (static_cast<int>(joint_parents.size()) != k) fail("joint_parents length != K");
    if (shape_basis.rows() != 3 * nv) fail("shape_basis rows != 3*N_v");
    if (expression_basis.rows() != 3 * nv) fail("expression_basis rows != 3*N_v");
    if (skinning_weights.rows() != nv || skinning_weights.cols() != k) fail("skinning_weights must be N_v x K");
    if (faces.size() % 3 != 0) fail("faces length not a multiple of 3");
    for (int r = 0; r < nv; ++r) {
      if ((skinning_weights.row(r).array() < 0.0).any()) fail("negative skinning weight");
      if (std::abs(skinning_weights.row(r).sum() - 1.0) > 1e-6) fail("skinning weights do not sum to 1");
    }
    auto in_range = [nv](const std::vector<int>& idx) {
      for (int i : idx)
        if (i < 0 || i >= nv) return false;
      return true;
    };
    if (!in_range(faces) || !in_range(lip_indices) || !in_range(upper_face_indices))
      fail("vertex index out of range");
    if (!in_range({mouth_pair[0], mouth_pair[1]}) || mouth_pair[0] == mouth_pair[1])
      fail("mouth_pair must be two distinct in-range vertices");
    int roots = 0;
    for (int p : joint_parents) {
      if (p < -1 || p >= k) fail("joint parent out of range");
      roots += (p < 0);
    }
    if (roots < 1) fail("joint hierarchy has no root");
    (void)joint_order();
    if (!template_vertices.allFinite() || !shape_basis.allFinite() || !expression_basis.allFinite())
      fail("non-finite template data");
  }
};

/// Expression coefficients plus jaw and global axis-angle rotations.
/// Packed layout: [psi | jaw(3) | global(3)].
struct MotionParams {
  Vector psi;
  Vec3 jaw = Vec3::Zero();
  Vec3 global = Vec3::Zero();

  static MotionParams zero(int expression_dim) { return {Vector::Zero(expression_dim), Vec3::Zero(), Vec3::Zero()}; }

  static MotionParams unpack(const Eigen::Ref<const RowVector>& x) {
    const auto dpsi = x.size() - 6;
    detail::require<ParameterError>(dpsi >= 0, "motion vector shorter than 6");
    MotionParams m;
    m.psi = x.head(dpsi).transpose();
    m.jaw = x.segment(dpsi, 3).transpose();
    m.global = x.tail(3).transpose();
    return m;
  }

  RowVector packed() const {
    RowVector x(psi.size() + 6);
    x << psi.transpose(), jaw.transpose(), global.transpose();
    return x;
  }
};

struct ShapeParams {
  Vector beta;
};

/// T x D_x motion frames at 25 Hz.
struct MotionSequence {
  Matrix frames;
  double frame_rate = kMotionFrameRate;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

/// T x (3*N_v): one flattened mesh per row, [x0 y0 z0 x1 ...].
struct MeshSequence {
  Matrix positions;

  Eigen::Index frames() const { return positions.rows(); }
  Eigen::Index vertex_count() const { return positions.cols() / 3; }

  Vec3 vertex(Eigen::Index t, Eigen::Index v) const {
    return positions.row(t).segment<3>(3 * v).transpose();
  }

  Matrix frame(Eigen::Index t) const {
    return Eigen::Map<const Matrix>(positions.row(t).data(), vertex_count(), 3);
  }
};

// ---------------------------------------------------------------------------
// Rotations

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

/// Axis-angle to rotation matrix.
inline Mat3 rodrigues(const Vec3& r) {
  const double theta = r.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(r);
  const Mat3 k = skew(r / theta);
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

/// dR/dr_i for i = 0..2, using the closed form
/// dR/dr_i = (r_i [r]x + [r x (I - R) e_i]x) R / |r|^2.
inline std::array<Mat3, 3> rodrigues_derivatives(const Vec3& r) {
  std::array<Mat3, 3> d;
  const double theta2 = r.squaredNorm();
  if (theta2 < 1e-16) {
    for (int i = 0; i < 3; ++i) d[i] = skew(Vec3::Unit(i));
    return d;
  }
  const Mat3 R = rodrigues(r);
  const Mat3 rx = skew(r);
  const Mat3 IminusR = Mat3::Identity() - R;
  for (int i = 0; i < 3; ++i) {
    const Vec3 c = r.cross(IminusR.col(i));
    d[i] = (r(i) * rx + skew(c)) * R / theta2;
  }
  return d;
}

/// Rotation angle of R_a^T R_b (radians). Uses atan2 so small angles keep
/// full precision.
inline double relative_angle(const Mat3& a, const Mat3& b) {
  const Mat3 r = a.transpose() * b;
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
}

// ---------------------------------------------------------------------------
// Mesh construction

namespace detail {

inline void check_dims(const FaceTemplate& tpl, const Vector& beta, const MotionParams& x) {
  if (beta.size() != tpl.shape_dim())
    throw ParameterError("shape parameter has " + std::to_string(beta.size()) + " entries, template expects " +
                         std::to_string(tpl.shape_dim()));
  if (x.psi.size() != tpl.expression_dim())
    throw ParameterError("expression parameter has " + std::to_string(x.psi.size()) +
                         " entries, template expects " + std::to_string(tpl.expression_dim()));
}

struct JointTransforms {
  std::vector<Mat3> rotation;     // world rotation per joint
  std::vector<Vec3> translation;  // world position of each joint
};

inline JointTransforms pose_joints(const FaceTemplate& tpl, const Mat3& global, const Mat3& jaw) {
  const int k = tpl.joint_count();
  JointTransforms jt{std::vector<Mat3>(k), std::vector<Vec3>(k)};
  const int jaw_idx = tpl.jaw_joint();
  for (int j : tpl.joint_order()) {
    const int p = tpl.joint_parents[j];
    Mat3 local = Mat3::Identity();
    if (p < 0)
      local = global;
    else if (j == jaw_idx)
      local = jaw;
    const Vec3 pos = tpl.joint_positions.row(j).transpose();
    if (p < 0) {
      jt.rotation[j] = local;
      jt.translation[j] = pos;
    } else {
      const Vec3 offset = pos - tpl.joint_positions.row(p).transpose();
      jt.rotation[j] = jt.rotation[p] * local;
      jt.translation[j] = jt.rotation[p] * offset + jt.translation[p];
    }
  }
  return jt;
}

/// Blendshaped, unposed vertices (N_v x 3).
inline Matrix shaped_vertices(const FaceTemplate& tpl, const Vector& beta, const Vector& psi) {
  Vector flat = Eigen::Map<const Vector>(tpl.template_vertices.data(), tpl.template_vertices.size());
  flat += tpl.shape_basis * beta + tpl.expression_basis * psi;
  return Eigen::Map<const Matrix>(flat.data(), tpl.vertex_count(), 3);
}

}  // namespace detail

/// Mesh vertices (N_v x 3) for shape beta and motion x. Joints stay at the
/// template joint positions regardless of beta.
inline Matrix construct_mesh(const FaceTemplate& tpl, const Vector& beta, const MotionParams& x) {
  detail::check_dims(tpl, beta, x);
  const Matrix shaped = detail::shaped_vertices(tpl, beta, x.psi);
  const auto jt = detail::pose_joints(tpl, rodrigues(x.global), rodrigues(x.jaw));
  Matrix out = Matrix::Zero(tpl.vertex_count(), 3);
  for (int v = 0; v < tpl.vertex_count(); ++v) {
    const Vec3 p = shaped.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < tpl.joint_count(); ++j) {
      const double w = tpl.skinning_weights(v, j);
      if (w == 0.0) continue;
      acc += w * (jt.rotation[j] * (p - tpl.joint_positions.row(j).transpose()) + jt.translation[j]);
    }
    out.row(v) = acc.transpose();
  }
  return out;
}

/// Jacobian of the flattened construct_mesh output (3*N_v rows) with respect
/// to [beta | psi | jaw | global], or to [psi | jaw | global] alone when
/// include_shape is false.
inline Matrix construct_mesh_jacobian(const FaceTemplate& tpl, const Vector& beta, const MotionParams& x,
                                      bool include_shape = true) {
  detail::check_dims(tpl, beta, x);
  const int nv = tpl.vertex_count();
  const int k = tpl.joint_count();
  const int db = include_shape ? tpl.shape_dim() : 0;
  const int dpsi = tpl.expression_dim();
  const Matrix shaped = detail::shaped_vertices(tpl, beta, x.psi);
  const Mat3 Rg = rodrigues(x.global);
  const Mat3 Rj = rodrigues(x.jaw);
  const auto jt = detail::pose_joints(tpl, Rg, Rj);
  const auto dRg = rodrigues_derivatives(x.global);
  const auto dRj = rodrigues_derivatives(x.jaw);
  const int jaw_idx = tpl.jaw_joint();
  const auto order = tpl.joint_order();

  Matrix J = Matrix::Zero(3 * nv, db + dpsi + 6);

  // Blendshape columns: the skinning map is affine in the shaped vertex, with
  // linear part B_v = sum_k w_vk R_k.
  for (int v = 0; v < nv; ++v) {
    Mat3 B = Mat3::Zero();
    for (int j = 0; j < k; ++j) B += tpl.skinning_weights(v, j) * jt.rotation[j];
    if (include_shape) J.block(3 * v, 0, 3, db) = B * tpl.shape_basis.middleRows(3 * v, 3);
    J.block(3 * v, db, 3, dpsi) = B * tpl.expression_basis.middleRows(3 * v, 3);
  }

  // Rotation columns: forward-mode propagation of each local rotation
  // derivative through the joint chain.
  for (int c = 0; c < 6; ++c) {
    const bool is_jaw = c < 3;
    const Mat3& dlocal = is_jaw ? dRj[c] : dRg[c - 3];
    std::vector<Mat3> dR(k, Mat3::Zero());
    std::vector<Vec3> dt(k, Vec3::Zero());
    for (int j : order) {
      const int p = tpl.joint_parents[j];
      if (p < 0) {
        dR[j] = is_jaw ? Mat3::Zero() : dlocal;
        continue;
      }
      Mat3 local = (j == jaw_idx) ? Rj : Mat3::Identity();
      Mat3 dloc = (j == jaw_idx && is_jaw) ? dlocal : Mat3::Zero();
      const Vec3 offset = (tpl.joint_positions.row(j) - tpl.joint_positions.row(p)).transpose();
      dR[j] = dR[p] * local + jt.rotation[p] * dloc;
      dt[j] = dR[p] * offset + dt[p];
    }
    for (int v = 0; v < nv; ++v) {
      const Vec3 p = shaped.row(v).transpose();
      Vec3 acc = Vec3::Zero();
      for (int j = 0; j < k; ++j) {
        const double w = tpl.skinning_weights(v, j);
        if (w == 0.0) continue;
        acc += w * (dR[j] * (p - tpl.joint_positions.row(j).transpose()) + dt[j]);
      }
      J.block(3 * v, db + dpsi + c, 3, 1) = acc;
    }
  }
  return J;
}

/// One mesh per frame. With zero_head_pose the global rotation is discarded
/// (jaw retained).
inline MeshSequence mesh_sequence(const FaceTemplate& tpl, const Vector& beta, const MotionSequence& X,
                                  bool zero_head_pose) {
  if (X.dim() != tpl.motion_dim())
    throw ParameterError("motion dimension " + std::to_string(X.dim()) + " != template motion dimension " +
                         std::to_string(tpl.motion_dim()));
  MeshSequence out{Matrix(X.length(), 3 * tpl.vertex_count())};
  for (Eigen::Index t = 0; t < X.length(); ++t) {
    auto x = MotionParams::unpack(X.frames.row(t));
    if (zero_head_pose) x.global.setZero();
    const Matrix m = construct_mesh(tpl, beta, x);
    out.positions.row(t) = Eigen::Map<const RowVector>(m.data(), m.size());
  }
  return out;
}

inline MeshSequence zero_pose_mesh_sequence(const FaceTemplate& tpl, const Vector& beta, const MotionSequence& X) {
  return mesh_sequence(tpl, beta, X, true);
}

inline MeshSequence posed_mesh_sequence(const FaceTemplate& tpl, const Vector& beta, const MotionSequence& X) {
  return mesh_sequence(tpl, beta, X, false);
}

/// Lip gap: distance between the two mouth_pair vertices of one mesh frame
/// (N_v x 3).
inline double mouth_opening(const FaceTemplate& tpl, const Matrix& mesh_frame) {
  detail::require<ParameterError>(mesh_frame.rows() == tpl.vertex_count() && mesh_frame.cols() == 3,
                                  "mouth_opening: mesh frame does not match template");
  return (mesh_frame.row(tpl.mouth_pair[0]) - mesh_frame.row(tpl.mouth_pair[1])).norm();
}

/// Differentiable per-frame mesh construction for the geometric losses.
/// X: T x D_x motion; result: T x 3N_v. Gradients flow into X only. The
/// template is captured by reference and must outlive the graph.
inline ag::Var mesh_sequence_op(const FaceTemplate& tpl, const Vector& beta, const ag::Var& X, bool zero_head_pose) {
  MotionSequence seq{X.value()};
  MeshSequence mesh = mesh_sequence(tpl, beta, seq, zero_head_pose);
  return ag::make_result(std::move(mesh.positions), {X}, [&tpl, beta, zero_head_pose](ag::Node& self) {
    auto& Xn = *self.parents[0];
    Matrix gx = Matrix::Zero(Xn.value.rows(), Xn.value.cols());
    for (Eigen::Index t = 0; t < Xn.value.rows(); ++t) {
      auto x = MotionParams::unpack(Xn.value.row(t));
      if (zero_head_pose) x.global.setZero();
      const Matrix J = construct_mesh_jacobian(tpl, beta, x, false);
      RowVector g = self.grad.row(t) * J;
      if (zero_head_pose) g.tail(3).setZero();
      gx.row(t) = g;
    }
    Xn.accumulate(gx);
  });
}

// ---------------------------------------------------------------------------
// FTPL container
//
//   "FTPL", u32 version=1, u32 N_v, u32 D_beta, u32 D_psi, u32 K,
//   f32 template_vertices[N_v*3], f32 joint_positions[K*3],
//   f32 shape_basis[N_v*3*D_beta], f32 expression_basis[N_v*3*D_psi],
//   f32 skinning_weights[N_v*K],
//   then u32-length-prefixed i32 lists: faces, lip, upper_face, mouth_pair,
//   joint_parents.

inline std::vector<char> serialize_template(const FaceTemplate& tpl) {
  io::ByteWriter w;
  w.magic("FTPL");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(tpl.vertex_count()));
  w.u32(static_cast<std::uint32_t>(tpl.shape_dim()));
  w.u32(static_cast<std::uint32_t>(tpl.expression_dim()));
  w.u32(static_cast<std::uint32_t>(tpl.joint_count()));
  w.f32_array(tpl.template_vertices);
  w.f32_array(tpl.joint_positions);
  w.f32_array(tpl.shape_basis);
  w.f32_array(tpl.expression_basis);
  w.f32_array(tpl.skinning_weights);
  w.i32_list(tpl.faces);
  w.i32_list(tpl.lip_indices);
  w.i32_list(tpl.upper_face_indices);
  w.i32_list({tpl.mouth_pair[0], tpl.mouth_pair[1]});
  w.i32_list(tpl.joint_parents);
  return w.bytes();
}

inline FaceTemplate deserialize_template(std::vector<char> bytes, const std::string& what = "face template") {
  io::ByteReader r(std::move(bytes), what);
  r.expect_magic("FTPL");
  if (const auto version = r.u32(); version != 1)
    throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto nv = r.u32();
  const auto db = r.u32();
  const auto dpsi = r.u32();
  const auto k = r.u32();
  FaceTemplate tpl;
  tpl.template_vertices = r.f32_matrix(nv, 3);
  tpl.joint_positions = r.f32_matrix(k, 3);
  tpl.shape_basis = r.f32_matrix(Eigen::Index(nv) * 3, db);
  tpl.expression_basis = r.f32_matrix(Eigen::Index(nv) * 3, dpsi);
  tpl.skinning_weights = r.f32_matrix(nv, k);
  tpl.faces = r.i32_list();
  tpl.lip_indices = r.i32_list();
  tpl.upper_face_indices = r.i32_list();
  const auto pair = r.i32_list();
  if (pair.size() != 2) throw DataError(what + ": mouth_pair must have exactly 2 entries");
  tpl.mouth_pair = {pair[0], pair[1]};
  tpl.joint_parents = r.i32_list();
  if (!r.at_end()) throw DataError(what + ": trailing bytes");
  // Weights are stored as f32; renormalise rows so the convexity invariant
  // holds to double precision after loading.
  for (Eigen::Index v = 0; v < tpl.skinning_weights.rows(); ++v) {
    const double s = tpl.skinning_weights.row(v).sum();
    if (s > 0.0) tpl.skinning_weights.row(v) /= s;
  }
  tpl.validate();
  return tpl;
}

inline void save_template(const std::filesystem::path& path, const FaceTemplate& tpl) {
  io::write_file_atomic(path, serialize_template(tpl));
}

inline FaceTemplate load_template(const std::filesystem::path& path) {
  return deserialize_template(io::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Toy template

/// Deterministic procedural face: 6 latitude rings x 7 longitudes on the front
/// of an ellipsoid (42 vertices), 8 shape and 6 expression components, a root
/// joint and a jaw joint. The two bottom rings follow the jaw; expression 0
/// pulls the lower lip down.
inline FaceTemplate make_toy_template(std::uint64_t seed = 7) {
  constexpr int kRings = 6;
  constexpr int kLon = 7;
  constexpr int kNv = kRings * kLon;
  constexpr int kShape = 8;
  constexpr int kExpr = 6;
  Rng rng(seed);

  FaceTemplate tpl;
  tpl.template_vertices.resize(kNv, 3);
  std::vector<double> lat(kNv), lon(kNv);
  for (int i = 0; i < kRings; ++i) {
    for (int j = 0; j < kLon; ++j) {
      const int v = i * kLon + j;
      lat[v] = -0.8 + 1.6 * i / (kRings - 1);
      lon[v] = -1.0 + 2.0 * j / (kLon - 1);
      tpl.template_vertices.row(v) << 0.08 * std::sin(lon[v]) * std::cos(lat[v]), 0.11 * std::sin(lat[v]),
          0.09 * std::cos(lon[v]) * std::cos(lat[v]);
    }
  }
  for (int i = 0; i + 1 < kRings; ++i) {
    for (int j = 0; j + 1 < kLon; ++j) {
      const int a = i * kLon + j, b = (i + 1) * kLon + j, c = (i + 1) * kLon + j + 1, d = i * kLon + j + 1;
      tpl.faces.insert(tpl.faces.end(), {a, b, c, a, c, d});
    }
  }

  tpl.joint_positions.resize(2, 3);
  tpl.joint_positions << 0.0, 0.0, 0.0, 0.0, -0.025, 0.02;
  tpl.joint_parents = {-1, 0};

  const double jaw_weight[kRings] = {1.0, 0.9, 0.0, 0.0, 0.0, 0.0};
  tpl.skinning_weights.resize(kNv, 2);
  for (int v = 0; v < kNv; ++v) {
    const double w = jaw_weight[v / kLon];
    tpl.skinning_weights.row(v) << 1.0 - w, w;
  }

  // Smooth random fields over (lat, lon), one per basis component and axis.
  auto smooth_basis = [&](int components, double amplitude) {
    Matrix basis(3 * kNv, components);
    for (int k = 0; k < components; ++k) {
      for (int axis = 0; axis < 3; ++axis) {
        const double f1 = 0.5 + 2.0 * rng.uniform(), f2 = 0.5 + 2.0 * rng.uniform();
        const double p1 = 2.0 * std::numbers::pi * rng.uniform(), p2 = 2.0 * std::numbers::pi * rng.uniform();
        const double a = amplitude * (0.5 + rng.uniform());
        for (int v = 0; v < kNv; ++v)
          basis(3 * v + axis, k) = a * std::sin(f1 * lat[v] * 3.0 + p1) * std::cos(f2 * lon[v] * 2.0 + p2);
      }
    }
    return basis;
  };
  tpl.shape_basis = smooth_basis(kShape, 0.004);
  tpl.expression_basis = smooth_basis(kExpr, 0.0015);
  for (int v = 0; v < kNv; ++v) {
    const double fall = std::exp(-std::pow(lon[v] / 0.5, 2)) * std::exp(-std::pow((lat[v] + 0.48) / 0.3, 2));
    tpl.expression_basis(3 * v + 0, 0) = 0.0;
    tpl.expression_basis(3 * v + 1, 0) = -0.004 * fall * (v / kLon <= 1 ? 1.0 : 0.2);
    tpl.expression_basis(3 * v + 2, 0) = 0.0;
  }

  for (int i : {1, 2})
    for (int j : {2, 3, 4}) tpl.lip_indices.push_back(i * kLon + j);
  for (int i : {4, 5})
    for (int j = 0; j < kLon; ++j) tpl.upper_face_indices.push_back(i * kLon + j);
  tpl.mouth_pair = {2 * kLon + 3, 1 * kLon + 3};
  tpl.validate();
  return tpl;
}

}  // namespace stylediff
