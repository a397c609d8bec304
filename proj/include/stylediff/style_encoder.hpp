#pragma once

// Speaking-style encoder: a transformer encoder over a motion window whose
// output tokens are mean-pooled into one embedding. Trained contrastively with
// NT-Xent, treating the two halves of a window as a positive pair.

#include "stylediff/autograd/nn.hpp"
#include "stylediff/checkpoint.hpp"
#include "stylediff/core/log.hpp"
#include "stylediff/core/stats.hpp"
#include "stylediff/dataset.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stylediff {

struct StyleEncoderConfig {
  int layers = 4;
  int heads = 4;
  int dim = 128;         // d_s
  int window = 100;      // T frames
  double temperature = 0.1;
  int motion_dim = 56;
  int ff_dim = 256;
  bool positional_encoding = true;
  std::uint64_t seed = 1;

  void validate() const {
    detail::require<ParameterError>(layers >= 1 && heads >= 1, "style encoder: layers and heads must be >= 1");
    detail::require<ParameterError>(dim % heads == 0, "style encoder: dim must be divisible by heads");
    detail::require<ParameterError>(temperature > 0.0, "style encoder: temperature must be positive");
    detail::require<ParameterError>(window >= 1 && motion_dim >= 1, "style encoder: window and motion_dim >= 1");
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("style.layers", layers);
    kv.set("style.heads", heads);
    kv.set("style.dim", dim);
    kv.set("style.window", window);
    kv.set("style.temperature", temperature);
    kv.set("style.motion_dim", motion_dim);
    kv.set("style.ff_dim", ff_dim);
    kv.set("style.positional_encoding", positional_encoding ? std::string("true") : std::string("false"));
    kv.set("style.seed", static_cast<long long>(seed));
    return kv;
  }

  static StyleEncoderConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, StyleEncoderConfig{}); }

  static StyleEncoderConfig from_kv(const KeyValueConfig& kv, StyleEncoderConfig c) {
    c.layers = static_cast<int>(kv.get_int("style.layers", c.layers));
    c.heads = static_cast<int>(kv.get_int("style.heads", c.heads));
    c.dim = static_cast<int>(kv.get_int("style.dim", c.dim));
    c.window = static_cast<int>(kv.get_int("style.window", c.window));
    c.temperature = kv.get_double("style.temperature", c.temperature);
    c.motion_dim = static_cast<int>(kv.get_int("style.motion_dim", c.motion_dim));
    c.ff_dim = static_cast<int>(kv.get_int("style.ff_dim", c.ff_dim));
    c.positional_encoding = kv.get_bool("style.positional_encoding", c.positional_encoding);
    c.seed = static_cast<std::uint64_t>(kv.get_int("style.seed", static_cast<long long>(c.seed)));
    return c;
  }
};

/// Exactly `length` frames: longer inputs keep their first frames, shorter
/// ones repeat the last frame.
inline Matrix fit_window(const Matrix& X, Eigen::Index length) {
  if (X.rows() < 1) throw InputError("style encoder: empty motion sequence");
  Matrix out(length, X.cols());
  for (Eigen::Index t = 0; t < length; ++t) out.row(t) = X.row(std::min(t, X.rows() - 1));
  return out;
}

class StyleEncoder {
 public:
  explicit StyleEncoder(StyleEncoderConfig config) : config_(config) {
    config_.validate();
    Rng rng(config_.seed);
    input_ = nn::Linear::create(store_, "input", config_.motion_dim, config_.dim, rng);
    for (int l = 0; l < config_.layers; ++l)
      layers_.push_back(nn::EncoderLayer::create(store_, "layer" + std::to_string(l), config_.dim, config_.heads,
                                                 config_.ff_dim, rng));
    norm_ = nn::LayerNorm::create(store_, "norm", config_.dim);
  }

  /// 1 x d_s embedding, differentiable with respect to the encoder weights.
  ag::Var encode_var(const Matrix& X) const {
    if (X.cols() != config_.motion_dim)
      throw ParameterError("style encoder: motion dimension " + std::to_string(X.cols()) + " != " +
                           std::to_string(config_.motion_dim));
    const Matrix window = fit_window(X, config_.window);
    ag::Var h = input_(ag::Var::constant(window));
    if (config_.positional_encoding)
      h = ag::add(h, ag::Var::constant(nn::sinusoidal_table(config_.window, config_.dim)));
    for (const auto& layer : layers_) h = layer(h);
    return ag::mean_rows(norm_(h));
  }

  RowVector encode_style(const Matrix& X) const {
    ag::NoGradGuard no_grad;
    return encode_var(X).value();
  }

  const StyleEncoderConfig& config() const { return config_; }
  StyleEncoderConfig& mutable_config() { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  void save(const std::filesystem::path& path) const {
    Checkpoint::from_store("style_encoder", config_.to_kv(), store_).save(path);
  }

  static StyleEncoder load(const std::filesystem::path& path) {
    const auto ck = Checkpoint::load(path);
    if (ck.kind != "style_encoder") throw CheckpointError(path.string() + ": not a style encoder checkpoint");
    StyleEncoder enc(StyleEncoderConfig::from_kv(ck.config));
    ck.load_into(enc.store_, "style_encoder");
    return enc;
  }

 private:
  StyleEncoderConfig config_;
  nn::ParameterStore store_;
  nn::Linear input_;
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm norm_;
};

// ---------------------------------------------------------------------------
// NT-Xent

/// NT-Xent over 2N embeddings stacked as [first halves; second halves]; row i
/// and row (i + N) mod 2N are positives. Mean over all 2N anchors of
///   -log( exp(cos(s_i, s_pos)/tau) / sum_{k != i} exp(cos(s_i, s_k)/tau) ).
inline ag::Var nt_xent(const ag::Var& embeddings, double temperature) {
  const auto rows = embeddings.rows();
  detail::require<ParameterError>(rows >= 2 && rows % 2 == 0, "nt_xent: need an even number (>= 2) of embeddings");
  detail::require<ParameterError>(temperature > 0.0, "nt_xent: temperature must be positive");
  const auto n = rows / 2;
  const Matrix& E = embeddings.value();
  Vector norms = E.rowwise().norm();
  for (Eigen::Index i = 0; i < rows; ++i)
    if (!(norms(i) > 0.0)) throw NumericError("nt_xent: zero-norm embedding at row " + std::to_string(i));
  Matrix U = E.array().colwise() / norms.array();
  Matrix S = (U * U.transpose()) / temperature;

  Matrix softmax = Matrix::Zero(rows, rows);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto pos = (i + n) % rows;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) mx = std::max(mx, S(i, k));
    double z = 0.0;
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) z += std::exp(S(i, k) - mx);
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) softmax(i, k) = std::exp(S(i, k) - mx) / z;
    loss += -S(i, pos) + mx + std::log(z);
  }
  loss /= static_cast<double>(rows);

  return ag::make_result(Matrix::Constant(1, 1, loss), {embeddings},
                         [U, norms, softmax, temperature, n](ag::Node& self) {
    const auto rows = U.rows();
    Matrix G = softmax;
    for (Eigen::Index i = 0; i < rows; ++i) G(i, (i + n) % rows) -= 1.0;
    G *= self.grad(0, 0) / static_cast<double>(rows);
    const Matrix dU = (G + G.transpose()) * U / temperature;
    Matrix dE(rows, U.cols());
    for (Eigen::Index i = 0; i < rows; ++i)
      dE.row(i) = (dU.row(i) - U.row(i) * U.row(i).dot(dU.row(i))) / norms(i);
    self.parents[0]->accumulate(dE);
  });
}

/// Loss for explicit positive pairs (first[i], second[i]).
inline double nt_xent_loss(const Matrix& first, const Matrix& second, double temperature) {
  detail::require<ParameterError>(first.rows() == second.rows() && first.cols() == second.cols() && first.rows() >= 1,
                                  "nt_xent_loss: need matching non-empty halves");
  Matrix stacked(2 * first.rows(), first.cols());
  stacked << first, second;
  ag::NoGradGuard no_grad;
  return nt_xent(ag::Var::constant(std::move(stacked)), temperature).item();
}

// ---------------------------------------------------------------------------
// Training

struct StyleTrainConfig {
  int iterations = 26000;
  int batch = 32;  // N_s windows of 2T frames per step
  double lr = 1e-4;
  std::uint64_t seed = 1;
  int log_every = 100;

  static StyleTrainConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, StyleTrainConfig{}); }

  static StyleTrainConfig from_kv(const KeyValueConfig& kv, StyleTrainConfig c) {
    c.iterations = static_cast<int>(kv.get_int("style_train.iterations", c.iterations));
    c.batch = static_cast<int>(kv.get_int("style_train.batch", c.batch));
    c.lr = kv.get_double("style_train.lr", c.lr);
    c.seed = static_cast<std::uint64_t>(kv.get_int("style_train.seed", static_cast<long long>(c.seed)));
    c.log_every = static_cast<int>(kv.get_int("style_train.log_every", c.log_every));
    return c;
  }
};

/// One contrastive step on a batch of 2T-frame windows. Returns the loss.
inline double style_train_step(StyleEncoder& encoder, nn::Adam& opt, const std::vector<Matrix>& windows) {
  const auto T = encoder.config().window;
  std::vector<ag::Var> firsts, seconds;
  for (const auto& w : windows) {
    detail::require<ParameterError>(w.rows() == 2 * T, "style_train_step: window must have 2T frames");
    firsts.push_back(encoder.encode_var(w.topRows(T)));
    seconds.push_back(encoder.encode_var(w.bottomRows(T)));
  }
  std::vector<ag::Var> all = firsts;
  all.insert(all.end(), seconds.begin(), seconds.end());
  auto loss = nt_xent(ag::concat_rows(all), encoder.config().temperature);
  ag::backward(loss);
  opt.step();
  return loss.item();
}

/// Trains on 2T-frame windows drawn from `clip_indices`. Returns the loss
/// trajectory; `on_step` (optional) observes each iteration.
inline std::vector<double> train_style_encoder(StyleEncoder& encoder, const Dataset& ds,
                                               const std::vector<std::size_t>& clip_indices,
                                               const StyleTrainConfig& config,
                                               const std::function<void(int, double)>& on_step = {}) {
  const auto T = encoder.config().window;
  WindowSampler sampler(ds, clip_indices, 2 * T, config.seed);
  nn::Adam opt(encoder.parameters(), {.lr = config.lr});
  std::vector<double> losses;
  losses.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<Matrix> windows;
    for (auto& s : sampler.batch(config.batch)) windows.push_back(std::move(s.motion));
    const double loss = style_train_step(encoder, opt, windows);
    losses.push_back(loss);
    if (on_step) on_step(it, loss);
    if (config.log_every > 0 && (it + 1) % config.log_every == 0)
      log::info("style encoder step").kv("iter", it + 1).kv("loss", loss);
  }
  return losses;
}

}  // namespace stylediff
