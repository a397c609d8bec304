#pragma once

// The trainable generator: denoiser, speech encoder and noise schedule, saved
// together in one checkpoint of kind "stylediff". Denoiser tensors keep their
// "denoiser." names; speech-encoder tensors are stored under "audio.".

#include "stylediff/audio_features.hpp"
#include "stylediff/checkpoint.hpp"
#include "stylediff/denoiser.hpp"
#include "stylediff/diffusion.hpp"

#include <memory>

namespace stylediff {

class StyleDiffModel {
 public:
  StyleDiffModel(DenoiserConfig config, std::unique_ptr<SpeechEncoder> speech)
      : denoiser_(config), speech_(std::move(speech)), schedule_(NoiseSchedule::cosine(config.steps)) {
    detail::require<ParameterError>(speech_ != nullptr, "model: speech encoder required");
    if (speech_->feature_dim() != config.audio_dim)
      throw ParameterError("model: speech encoder emits " + std::to_string(speech_->feature_dim()) +
                           " features, denoiser expects " + std::to_string(config.audio_dim));
  }

  const Denoiser& denoiser() const { return denoiser_; }
  Denoiser& denoiser() { return denoiser_; }
  const SpeechEncoder& speech() const { return *speech_; }
  SpeechEncoder& speech() { return *speech_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const DenoiserConfig& config() const { return denoiser_.config(); }

  /// Every trainable tensor under one store, for the optimiser and the
  /// checkpoint. Shares nodes with the component stores.
  nn::ParameterStore combined_parameters() {
    nn::ParameterStore all;
    append(all, "", denoiser_.parameters());
    append(all, "audio.", speech_->parameters());
    return all;
  }

  KeyValueConfig config_kv() const {
    KeyValueConfig kv = speech_->config();
    denoiser_.config().write(kv);
    return kv;
  }

  void save(const std::filesystem::path& path) {
    Checkpoint::from_store("stylediff", config_kv(), combined_parameters()).save(path);
  }

  static StyleDiffModel load(const std::filesystem::path& path) {
    const auto ck = Checkpoint::load(path);
    if (ck.kind != "stylediff") throw CheckpointError(path.string() + ": not a generator checkpoint");
    const auto kind = ck.config.get_string("audio.encoder", "toy");
    std::unique_ptr<SpeechEncoder> speech;
    if (kind == "toy")
      speech = std::make_unique<ToyConvEncoder>(ToyConvEncoder::config_from(ck.config));
    else if (kind == "pretrained")
      speech = std::make_unique<PretrainedEncoderAdapter>(PretrainedEncoderAdapter::config_from(ck.config));
    else
      throw CheckpointError(path.string() + ": unknown speech encoder kind '" + kind + "'");
    StyleDiffModel model(DenoiserConfig::from_kv(ck.config), std::move(speech));
    auto store = model.combined_parameters();
    ck.load_into(store, "stylediff");
    return model;
  }

 private:
  static void append(nn::ParameterStore& dst, const std::string& prefix, const nn::ParameterStore& src) {
    for (const auto& [name, v] : src.entries()) dst.adopt(prefix + name, v);
  }

  Denoiser denoiser_;
  std::unique_ptr<SpeechEncoder> speech_;
  NoiseSchedule schedule_;
};

}  // namespace stylediff
