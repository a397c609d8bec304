#pragma once

#include "stylediff/autograd/tensor.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stylediff::nn {

using ag::Var;

/// Ordered registry of named trainable tensors. Order is insertion order, which
/// fixes the checkpoint layout and the optimizer's iteration order.
class ParameterStore {
 public:
  Var add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw ParameterError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, Var::parameter(std::move(init)));
    return entries_.back().second;
  }

  /// Registers an existing tensor (sharing its node) under `name`.
  void adopt(const std::string& name, const Var& v) {
    if (index_.count(name)) throw ParameterError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
  }

  Var get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParameterError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += static_cast<std::size_t>(v.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

  /// Stops gradient flow into every parameter whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [name, v] : entries_)
      if (name.rfind(prefix, 0) == 0) v.set_requires_grad(trainable);
  }

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Glorot-uniform initialisation for a (fan_in x fan_out) weight.
inline Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * a;
  return m;
}

struct Linear {
  Var weight;
  Var bias;

  static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng, double gain = 1.0) {
    return {store.add(name + ".weight", xavier(in, out, rng, gain)),
            store.add(name + ".bias", Matrix::Zero(1, out))};
  }

  static Linear bind(const ParameterStore& store, const std::string& name) {
    return {store.get(name + ".weight"), store.get(name + ".bias")};
  }

  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index dim) {
    return {store.add(name + ".gamma", Matrix::Ones(1, dim)),
            store.add(name + ".beta", Matrix::Zero(1, dim))};
  }

  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                                   int heads, Rng& rng) {
    return {Linear::create(store, name + ".q", dim, dim, rng),
            Linear::create(store, name + ".k", dim, dim, rng),
            Linear::create(store, name + ".v", dim, dim, rng),
            Linear::create(store, name + ".o", dim, dim, rng), heads};
  }

  Var operator()(const Var& query, const Var& keys, std::shared_ptr<const ag::BoolMatrix> mask = nullptr,
                 std::vector<Matrix>* capture = nullptr) const {
    return o(ag::attention(q(query), k(keys), v(keys), heads, std::move(mask), capture));
  }
};

struct FeedForward {
  Linear in, out;

  static FeedForward create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                            Eigen::Index hidden, Rng& rng) {
    return {Linear::create(store, name + ".in", dim, hidden, rng),
            Linear::create(store, name + ".out", hidden, dim, rng)};
  }

  Var operator()(const Var& x) const { return out(ag::gelu(in(x))); }
};

/// Pre-norm transformer encoder block.
struct EncoderLayer {
  LayerNorm norm_attn, norm_ff;
  MultiHeadAttention self_attn;
  FeedForward ff;

  static EncoderLayer create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                             int heads, Eigen::Index hidden, Rng& rng) {
    EncoderLayer l;
    l.norm_attn = LayerNorm::create(store, name + ".norm_attn", dim);
    l.self_attn = MultiHeadAttention::create(store, name + ".self_attn", dim, heads, rng);
    l.norm_ff = LayerNorm::create(store, name + ".norm_ff", dim);
    l.ff = FeedForward::create(store, name + ".ff", dim, hidden, rng);
    return l;
  }

  Var operator()(const Var& x) const {
    auto n = norm_attn(x);
    auto h = x + self_attn(n, n);
    return h + ff(norm_ff(h));
  }
};

/// Pre-norm transformer decoder block: self-attention, masked
/// cross-attention onto a memory sequence, feed-forward. Self-attention can be
/// omitted to build position-isolated probe networks.
struct DecoderLayer {
  std::optional<LayerNorm> norm_self;
  std::optional<MultiHeadAttention> self_attn;
  LayerNorm norm_cross, norm_ff;
  MultiHeadAttention cross_attn;
  FeedForward ff;

  static DecoderLayer create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                             int heads, Eigen::Index hidden, bool with_self_attention, Rng& rng) {
    DecoderLayer l;
    if (with_self_attention) {
      l.norm_self = LayerNorm::create(store, name + ".norm_self", dim);
      l.self_attn = MultiHeadAttention::create(store, name + ".self_attn", dim, heads, rng);
    }
    l.norm_cross = LayerNorm::create(store, name + ".norm_cross", dim);
    l.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", dim, heads, rng);
    l.norm_ff = LayerNorm::create(store, name + ".norm_ff", dim);
    l.ff = FeedForward::create(store, name + ".ff", dim, hidden, rng);
    return l;
  }

  Var operator()(const Var& x, const Var& memory, std::shared_ptr<const ag::BoolMatrix> cross_mask,
                 std::vector<Matrix>* cross_capture = nullptr) const {
    Var h = x;
    if (self_attn) {
      auto n = (*norm_self)(h);
      h = h + (*self_attn)(n, n);
    }
    h = h + cross_attn(norm_cross(h), memory, std::move(cross_mask), cross_capture);
    return h + ff(norm_ff(h));
  }
};

/// Standard sinusoidal table: row i = [sin(i w_0), cos(i w_0), sin(i w_1), ...]
/// with w_k = 10000^(-2k/dim).
inline Matrix sinusoidal_table(Eigen::Index count, Eigen::Index dim, Eigen::Index offset = 0) {
  Matrix pe(count, dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i + offset);
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double w = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(dim));
      pe(i, c) = (c % 2 == 0) ? std::sin(pos * w) : std::cos(pos * w);
    }
  }
  return pe;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 0;
  double clip_norm = 0.0;  // 0 disables global gradient-norm clipping
};

/// Adam with linear learning-rate warmup. Parameters with requires_grad off
/// are skipped entirely.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config) : store_(store), config_(config) {}

  double current_lr() const {
    if (config_.warmup_steps <= 0) return config_.lr;
    return config_.lr * std::min(1.0, static_cast<double>(step_ + 1) / config_.warmup_steps);
  }

  /// Applies one update and clears gradients.
  void step() {
    const double lr = current_lr();
    ++step_;
    double clip = 1.0;
    if (config_.clip_norm > 0.0) {
      double sq = 0.0;
      for (auto& [_, p] : store_.entries())
        if (p.requires_grad() && p.has_grad()) sq += p.node()->grad.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, step_);
    const double bc2 = 1.0 - std::pow(config_.beta2, step_);
    for (auto& [name, p] : store_.entries()) {
      if (!p.requires_grad() || !p.has_grad()) continue;
      auto& st = state_[name];
      if (st.m.size() == 0) {
        st.m = Matrix::Zero(p.rows(), p.cols());
        st.v = Matrix::Zero(p.rows(), p.cols());
      }
      Matrix g = p.node()->grad * clip;
      st.m = config_.beta1 * st.m + (1.0 - config_.beta1) * g;
      st.v = config_.beta2 * st.v + (1.0 - config_.beta2) * g.cwiseAbs2();
      p.mutable_value().array() -=
          lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + config_.eps);
    }
    store_.zero_grad();
  }

  int steps_taken() const { return step_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  ParameterStore& store_;
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  int step_ = 0;
};

}  // namespace stylediff::nn
