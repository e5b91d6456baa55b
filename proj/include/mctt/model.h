#pragma once

// The complete transducer: multi-channel audio encoder, label encoder and
// joint network under one parameter registry.

#include <cstdint>
#include <memory>

#include "mctt/features.h"
#include "mctt/label_encoder.h"
#include "mctt/mc_encoder.h"
#include "mctt/streaming.h"
#include "mctt/transducer.h"

namespace mctt {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t n_layers_label = 2;
  ContextBound l_label;
  std::size_t d_joint = 0;  // 0 means d_model
  std::size_t vocab_size = 28;
  DecodeOptions decode;

  LabelEncoderConfig label_config() const;
  std::size_t joint_width() const { return d_joint ? d_joint : encoder.mha.d_model; }
  void validate() const;
};

class TransducerModel {
 public:
  TransducerModel(const ModelConfig& cfg, std::uint64_t seed);
  TransducerModel(const TransducerModel&) = delete;
  TransducerModel& operator=(const TransducerModel&) = delete;

  const ModelConfig& config() const { return cfg_; }

  // Inference-time context overrides; weights are unchanged.
  void set_audio_context(ContextWindow window);
  void set_label_context(ContextBound left);

  // -log P(y | x) for one utterance, differentiable w.r.t. every parameter.
  Tensor loss(const MultiChannelFeatures& feats, const TokenSequence& y) const;

  DecodeResult decode(const MultiChannelFeatures& feats) const;
  DecodeResult decode_streaming(const MultiChannelFeatures& feats) const;

  const MultiChannelEncoder& encoder() const { return *encoder_; }
  const LabelEncoder& labels() const { return *labels_; }
  const JointNetwork& joint() const { return *joint_; }
  const ParameterSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<MultiChannelEncoder> encoder_;
  std::unique_ptr<LabelEncoder> labels_;
  std::unique_ptr<JointNetwork> joint_;
  ParameterSet params_;
};

}  // namespace mctt
