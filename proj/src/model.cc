#include "mctt/model.h"

#include <random>

#include "mctt/errors.h"

namespace mctt {

LabelEncoderConfig ModelConfig::label_config() const {
  LabelEncoderConfig lc;
  lc.vocab_size = vocab_size;
  lc.mha = encoder.mha;
  lc.n_layers = n_layers_label;
  lc.left_context = l_label;
  return lc;
}

void ModelConfig::validate() const {
  encoder.validate();
  label_config().validate();
  if (decode.max_symbols_per_frame == 0) {
    throw ConfigError("decode: max_symbols_per_frame must be at least 1");
  }
}

TransducerModel::TransducerModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  encoder_ = std::make_unique<MultiChannelEncoder>(cfg_.encoder, rng);
  labels_ = std::make_unique<LabelEncoder>(cfg_.label_config(), rng);
  const std::size_t d = cfg_.encoder.mha.d_model;
  joint_ = std::make_unique<JointNetwork>(d, d, cfg_.joint_width(), cfg_.vocab_size, rng);
  encoder_->collect(params_, "encoder");
  labels_->collect(params_, "labels");
  joint_->collect(params_, "joint");
}

void TransducerModel::set_audio_context(ContextWindow window) {
  cfg_.encoder.context = window;
  encoder_->set_context(window);
}

void TransducerModel::set_label_context(ContextBound left) {
  cfg_.l_label = left;
  labels_->set_left_context(left);
}

Tensor TransducerModel::loss(const MultiChannelFeatures& feats, const TokenSequence& y) const {
  Tensor h = encoder_->encode(feats);
  Tensor g = labels_->encode_labels(y);
  return transducer_loss_from_logits(joint_->lattice(h, g), y);
}

DecodeResult TransducerModel::decode(const MultiChannelFeatures& feats) const {
  NoGradGuard no_grad;
  return greedy_decode(encoder_->encode(feats), *labels_, *joint_, cfg_.decode);
}

DecodeResult TransducerModel::decode_streaming(const MultiChannelFeatures& feats) const {
  return stream_decode(*encoder_, *labels_, *joint_, feats, cfg_.decode);
}

}  // namespace mctt
