#pragma once

// Minimal reverse-mode automatic differentiation over row-major double
// matrices. Every value is a 2-D matrix; scalars are 1x1. The graph is built
// eagerly while ops run and released when the last Var referencing it dies.

#include "stylediff/core/errors.hpp"
#include "stylediff/core/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace stylediff::ag {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }

  template <class Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(Matrix value) { return Var(std::move(value), false); }
  static Var parameter(Matrix value) { return Var(std::move(value), true); }
  static Var scalar(double v) { return Var(Matrix::Constant(1, 1, v), false); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    detail::require<ParameterError>(node_->value.size() == 1, "item() on a non-scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) const { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient, or zeros of the value's shape if nothing flowed here.
  Matrix grad() const {
    return has_grad() ? node_->grad : Matrix::Zero(rows(), cols());
  }
  void zero_grad() const { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates an op result. Parents and the backward closure are recorded only if
/// grad mode is on and at least one parent needs a gradient.
inline Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!grad_mode()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  n.parents.reserve(parents.size());
  for (auto& p : parents) n.parents.push_back(p.node());
  n.backward = std::move(backward);
  return out;
}

/// Runs reverse accumulation from a scalar root. Leaf gradients accumulate
/// across calls until zeroed; intermediate gradients are released.
inline void backward(const Var& root) {
  detail::require<ParameterError>(root.rows() == 1 && root.cols() == 1,
                                  "backward() requires a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(*n);
      n->grad.resize(0, 0);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops

inline Var matmul(const Var& a, const Var& b) {
  detail::require<ParameterError>(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix v = a.value() * b.value();
  return make_result(std::move(v), {a, b}, [](Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.accumulate(self.grad * B.value.transpose());
    if (B.requires_grad) B.accumulate(A.value.transpose() * self.grad);
  });
}

/// x * W + b with b broadcast over rows. W is (in x out), b is (1 x out).
inline Var linear(const Var& x, const Var& W, const Var& b) {
  detail::require<ParameterError>(x.cols() == W.rows(), "linear: input width mismatch");
  Matrix v = x.value() * W.value();
  v.rowwise() += b.value().row(0);
  return make_result(std::move(v), {x, W, b}, [](Node& self) {
    auto& X = *self.parents[0];
    auto& Wn = *self.parents[1];
    auto& Bn = *self.parents[2];
    if (X.requires_grad) X.accumulate(self.grad * Wn.value.transpose());
    if (Wn.requires_grad) Wn.accumulate(X.value.transpose() * self.grad);
    if (Bn.requires_grad) Bn.accumulate(self.grad.colwise().sum());
  });
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ParameterError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(-self.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.accumulate(self.grad.cwiseProduct(B.value));
    if (B.requires_grad) B.accumulate(self.grad.cwiseProduct(A.value));
  });
}

inline Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// a + row, with row (1 x c) broadcast to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  detail::require<ParameterError>(row.rows() == 1 && row.cols() == a.cols(),
                                  "add_row: row must be 1 x cols");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return make_result(std::move(v), {a, row}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

inline Var relu(const Var& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return make_result(std::move(v), {a}, [](Node& self) {
    auto& A = *self.parents[0];
    A.accumulate(self.grad.cwiseProduct((A.value.array() > 0.0).cast<double>().matrix()));
  });
}

inline Var tanh(const Var& a) {
  Matrix v = a.value().array().tanh().matrix();
  return make_result(v, {a}, [v](Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct((1.0 - v.array().square()).matrix()));
  });
}

/// Tanh-approximated GELU.
inline Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  const Matrix& x = a.value();
  Matrix inner = (k * (x.array() + 0.044715 * x.array().cube())).matrix();
  Matrix t = inner.array().tanh().matrix();
  Matrix v = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return make_result(std::move(v), {a}, [t](Node& self) {
    constexpr double k = 0.7978845608028654;
    const Matrix& x = self.parents[0]->value;
    auto dinner = k * (1.0 + 3.0 * 0.044715 * x.array().square());
    auto d = 0.5 * (1.0 + t.array()) + 0.5 * x.array() * (1.0 - t.array().square()) * dinner;
    self.parents[0]->accumulate((self.grad.array() * d).matrix());
  });
}

// ---------------------------------------------------------------------------
// Shape ops

inline Var concat_rows(const std::vector<Var>& parts) {
  detail::require<ParameterError>(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::require<ParameterError>(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_result(std::move(v), parts, [](Node& self) {
    Eigen::Index r = 0;
    for (auto& p : self.parents) {
      const auto n = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(r, n));
      r += n;
    }
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::require<ParameterError>(start >= 0 && count >= 0 && start + count <= a.rows(),
                                  "slice_rows: range out of bounds");
  Matrix v = a.value().middleRows(start, count);
  return make_result(std::move(v), {a}, [start, count](Node& self) {
    self.parents[0]->grad_buffer().middleRows(start, count) += self.grad;
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::require<ParameterError>(start >= 0 && count >= 0 && start + count <= a.cols(),
                                  "slice_cols: range out of bounds");
  Matrix v = a.value().middleCols(start, count);
  return make_result(std::move(v), {a}, [start, count](Node& self) {
    self.parents[0]->grad_buffer().middleCols(start, count) += self.grad;
  });
}

/// Repeats a 1 x c row n times.
inline Var broadcast_rows(const Var& row, Eigen::Index n) {
  detail::require<ParameterError>(row.rows() == 1, "broadcast_rows: expected a single row");
  Matrix v = row.value().replicate(n, 1);
  return make_result(std::move(v), {row}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.colwise().sum());
  });
}

inline Var mean_rows(const Var& a) {
  detail::require<ParameterError>(a.rows() > 0, "mean_rows: empty input");
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix v = a.value().colwise().sum() * inv;
  return make_result(std::move(v), {a}, [inv](Node& self) {
    const auto n = self.parents[0]->value.rows();
    self.parents[0]->accumulate(self.grad.replicate(n, 1) * inv);
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum_all(const Var& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    auto& A = *self.parents[0];
    A.accumulate(Matrix::Constant(A.value.rows(), A.value.cols(), self.grad(0, 0)));
  });
}

/// Mean over all elements of (a - b)^2.
inline Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  detail::require<ParameterError>(a.value().size() > 0, "mse: empty input");
  Matrix diff = a.value() - b.value();
  const double inv = 1.0 / static_cast<double>(diff.size());
  const double v = diff.squaredNorm() * inv;
  return make_result(Matrix::Constant(1, 1, v), {a, b}, [diff, inv](Node& self) {
    const double g = 2.0 * inv * self.grad(0, 0);
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(diff * g);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(diff * -g);
  });
}

/// Mean over all elements of a^2.
inline Var mean_square(const Var& a) {
  detail::require<ParameterError>(a.value().size() > 0, "mean_square: empty input");
  const double inv = 1.0 / static_cast<double>(a.value().size());
  const double v = a.value().squaredNorm() * inv;
  return make_result(Matrix::Constant(1, 1, v), {a}, [inv](Node& self) {
    self.parents[0]->accumulate(self.parents[0]->value * (2.0 * inv * self.grad(0, 0)));
  });
}

// ---------------------------------------------------------------------------
// Fused layers

/// Row-wise layer normalisation with affine gamma/beta (each 1 x c).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Matrix& X = x.value();
  const auto rows = X.rows();
  const auto cols = X.cols();
  Matrix xhat(rows, cols);
  Vector inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return make_result(std::move(y), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    auto& X = *self.parents[0];
    auto& G = *self.parents[1];
    auto& B = *self.parents[2];
    const Matrix& dy = self.grad;
    if (G.requires_grad) G.accumulate(dy.cwiseProduct(xhat).colwise().sum());
    if (B.requires_grad) B.accumulate(dy.colwise().sum());
    if (X.requires_grad) {
      Matrix dxhat = dy.array().rowwise() * G.value.row(0).array();
      Matrix dx(dy.rows(), dy.cols());
      for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      X.accumulate(dx);
    }
  });
}

/// Multi-head scaled dot-product attention on already-projected q, k, v.
/// `mask` (Lq x Lk, true = may attend) is optional; every row must allow at
/// least one key. Masked weights are exactly zero. If `capture` is non-null
/// it receives the per-head attention matrices.
inline Var attention(const Var& q, const Var& k, const Var& v, int heads,
                     std::shared_ptr<const BoolMatrix> mask = nullptr,
                     std::vector<Matrix>* capture = nullptr) {
  const auto Lq = q.rows();
  const auto Lk = k.rows();
  const auto d = q.cols();
  detail::require<ParameterError>(heads >= 1 && d % heads == 0, "attention: d not divisible by heads");
  detail::require<ParameterError>(k.cols() == d && v.cols() == d && v.rows() == Lk,
                                  "attention: q/k/v shapes disagree");
  if (mask)
    detail::require<ParameterError>(mask->rows() == Lq && mask->cols() == Lk,
                                    "attention: mask shape mismatch");
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs(heads);
  Matrix out(Lq, d);
  for (int h = 0; h < heads; ++h) {
    Matrix s = (q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < Lq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < Lk; ++j)
        if (!mask || (*mask)(i, j)) mx = std::max(mx, s(i, j));
      if (!std::isfinite(mx)) throw NumericError("attention: fully masked or non-finite row");
      double z = 0.0;
      for (Eigen::Index j = 0; j < Lk; ++j) {
        if (!mask || (*mask)(i, j)) {
          s(i, j) = std::exp(s(i, j) - mx);
          z += s(i, j);
        } else {
          s(i, j) = 0.0;
        }
      }
      s.row(i) /= z;
    }
    out.middleCols(h * dh, dh) = s * v.value().middleCols(h * dh, dh);
    probs[h] = std::move(s);
  }
  if (capture) *capture = probs;

  return make_result(std::move(out), {q, k, v},
                     [probs = std::move(probs), heads, dh, scale](Node& self) {
    auto& Q = *self.parents[0];
    auto& K = *self.parents[1];
    auto& V = *self.parents[2];
    Matrix dq = Matrix::Zero(Q.value.rows(), Q.value.cols());
    Matrix dk = Matrix::Zero(K.value.rows(), K.value.cols());
    Matrix dv = Matrix::Zero(V.value.rows(), V.value.cols());
    for (int h = 0; h < heads; ++h) {
      const Matrix& P = probs[h];
      auto dOh = self.grad.middleCols(h * dh, dh);
      if (V.requires_grad) dv.middleCols(h * dh, dh) = P.transpose() * dOh;
      if (Q.requires_grad || K.requires_grad) {
        Matrix dP = dOh * V.value.middleCols(h * dh, dh).transpose();
        Vector rowdot = dP.cwiseProduct(P).rowwise().sum();
        Matrix dS = (P.array() * (dP.colwise() - rowdot).array()).matrix() * scale;
        if (Q.requires_grad) dq.middleCols(h * dh, dh) = dS * K.value.middleCols(h * dh, dh);
        if (K.requires_grad) dk.middleCols(h * dh, dh) = dS.transpose() * Q.value.middleCols(h * dh, dh);
      }
    }
    if (Q.requires_grad) Q.accumulate(dq);
    if (K.requires_grad) K.accumulate(dk);
    if (V.requires_grad) V.accumulate(dv);
  });
}

/// Valid (unpadded) strided 1-D convolution over time.
/// x: (L x c_in), W: (kernel*c_in x c_out), b: (1 x c_out).
/// Output row o sees input rows [o*stride, o*stride + kernel).
inline Var conv1d(const Var& x, const Var& W, const Var& b, int kernel, int stride) {
  const auto L = x.rows();
  const auto cin = x.cols();
  detail::require<ParameterError>(kernel >= 1 && stride >= 1, "conv1d: bad kernel/stride");
  detail::require<ParameterError>(W.rows() == kernel * cin, "conv1d: weight rows != kernel*c_in");
  detail::require<ParameterError>(L >= kernel, "conv1d: input shorter than kernel");
  const auto lout = (L - kernel) / stride + 1;
  const auto patch = kernel * cin;
  // Row-major input makes each receptive field one contiguous run.
  Matrix patches(lout, patch);
  for (Eigen::Index o = 0; o < lout; ++o)
    patches.row(o) = Eigen::Map<const RowVector>(x.value().data() + o * stride * cin, patch);
  Matrix y = patches * W.value();
  y.rowwise() += b.value().row(0);
  return make_result(std::move(y), {x, W, b},
                     [patches = std::move(patches), stride, cin, patch](Node& self) {
    auto& X = *self.parents[0];
    auto& Wn = *self.parents[1];
    auto& Bn = *self.parents[2];
    if (Wn.requires_grad) Wn.accumulate(patches.transpose() * self.grad);
    if (Bn.requires_grad) Bn.accumulate(self.grad.colwise().sum());
    if (X.requires_grad) {
      Matrix dpatch = self.grad * Wn.value.transpose();
      Matrix& gx = X.grad_buffer();
      for (Eigen::Index o = 0; o < dpatch.rows(); ++o)
        Eigen::Map<RowVector>(gx.data() + o * stride * cin, patch) += dpatch.row(o);
    }
  });
}

}  // namespace stylediff::ag
