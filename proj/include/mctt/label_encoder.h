#pragma once

// Causal transformer over the emitted label history (the transducer's
// prediction network). Row u of the output depends on y_0 .. y_u only, where
// y_0 is the start-of-sentence marker.

#include <random>
#include <string>
#include <vector>

#include "mctt/attention.h"
#include "mctt/tensor.h"
#include "mctt/vocab.h"

namespace mctt {

struct LabelEncoderConfig {
  std::size_t vocab_size = 28;
  MhaConfig mha;
  std::size_t n_layers = 2;
  ContextBound left_context;  // per layer; right context is always 0

  void validate() const;
};

// Cached decoding state. layers[l] holds the projected keys/values of the
// most recent rows fed to layer l, trimmed to the left context.
struct LabelState {
  std::size_t position = 0;  // rows consumed so far, sos included
  ContextBound left_context;
  std::vector<KeyValue> layers;
  Tensor output;  // (1, d_model) state for the last consumed token

  bool started() const { return position > 0; }
  std::size_t cached_rows() const;
};

class LabelEncoder {
 public:
  LabelEncoder(const LabelEncoderConfig& cfg, std::mt19937_64& rng);

  const LabelEncoderConfig& config() const { return cfg_; }
  void set_left_context(ContextBound left) { cfg_.left_context = left; }

  // [sos, y_1 .. y_U] -> (U + 1, d_model).
  Tensor encode_labels(const TokenSequence& y) const;

  // Appends one token and computes only its row. Runs without recording a
  // gradient graph.
  LabelState step(const LabelState& prev, TokenId token) const;
  LabelState start() const { return step(LabelState{}, kSos); }

  const Tensor& embedding_table() const { return table_; }
  void collect(ParameterSet& params, const std::string& prefix) const;

 private:
  Tensor embed(const std::vector<TokenId>& ids, std::size_t offset) const;

  LabelEncoderConfig cfg_;
  Tensor table_;
  std::vector<AttentionBlock> layers_;
};

}  // namespace mctt
