#include "mctt/label_encoder.h"

#include "mctt/errors.h"

namespace mctt {

void LabelEncoderConfig::validate() const {
  mha.validate();
  if (vocab_size < 3) throw ConfigError("label encoder: vocabulary needs at least 3 entries");
  if (n_layers == 0) throw ConfigError("label encoder: need at least one layer");
  if (mha.d_model % 2 != 0) throw ConfigError("label encoder: d_model must be even");
}

std::size_t LabelState::cached_rows() const {
  std::size_t n = 0;
  for (const auto& kv : layers) n += kv.keys.defined() ? kv.keys.dim(0) : 0;
  return n;
}

LabelEncoder::LabelEncoder(const LabelEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  table_ = xavier_uniform(cfg_.vocab_size, cfg_.mha.d_model, rng);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) layers_.emplace_back(cfg_.mha, rng);
}

Tensor LabelEncoder::embed(const std::vector<TokenId>& ids, std::size_t offset) const {
  return add(embedding(table_, ids), positional_encoding(ids.size(), cfg_.mha.d_model, offset));
}

Tensor LabelEncoder::encode_labels(const TokenSequence& y) const {
  check_labels(y, cfg_.vocab_size);
  std::vector<TokenId> ids;
  ids.reserve(y.size() + 1);
  ids.push_back(kSos);
  ids.insert(ids.end(), y.begin(), y.end());
  Tensor x = embed(ids, 0);
  auto mask = build_mask(ids.size(), ids.size(), ContextWindow::causal(cfg_.left_context));
  for (const auto& layer : layers_) x = layer.forward(x, x, mask);
  return x;
}

LabelState LabelEncoder::step(const LabelState& prev, TokenId token) const {
  if (prev.started()) {
    if (prev.layers.size() != layers_.size()) {
      throw StateError("label state caches " + std::to_string(prev.layers.size()) +
                       " layers, encoder has " + std::to_string(layers_.size()));
    }
    if (prev.left_context != cfg_.left_context) {
      throw StateError("label state was built with left context " +
                       context_bound_str(prev.left_context) + ", encoder uses " +
                       context_bound_str(cfg_.left_context));
    }
    check_labels({token}, cfg_.vocab_size);
  } else if (token != kSos) {
    throw StateError("label state must start with the sos token, got " +
                     std::to_string(token));
  }

  NoGradGuard no_grad;
  LabelState next;
  next.position = prev.position + 1;
  next.left_context = cfg_.left_context;
  next.layers.resize(layers_.size());
  Tensor x = embed({token}, prev.position);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    KeyValue fresh = layers_[l].project(x);
    KeyValue window = fresh;
    if (prev.started() && prev.layers[l].keys.defined()) {
      window.keys = concat_rows({prev.layers[l].keys, fresh.keys});
      window.values = concat_rows({prev.layers[l].values, fresh.values});
    }
    Tensor out = layers_[l].attend(x, window, nullptr);
    // The next query at position p + 1 sees p + 1 - L .. p + 1, so L rows
    // of history are enough.
    const std::size_t rows = window.keys.dim(0);
    const std::size_t keep = cfg_.left_context ? std::min(*cfg_.left_context, rows) : rows;
    if (keep > 0) {
      next.layers[l].keys = slice_rows(window.keys, rows - keep, rows);
      next.layers[l].values = slice_rows(window.values, rows - keep, rows);
    }
    x = out;
  }
  next.output = x;
  return next;
}

void LabelEncoder::collect(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".embedding", table_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect(params, prefix + ".layer" + std::to_string(l));
  }
}

}  // namespace mctt
