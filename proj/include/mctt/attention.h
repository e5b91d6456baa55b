#pragma once

// Multi-head attention layer (attention + feed-forward, each wrapped in a
// residual connection and post layer norm) and the (L, R) context masks
// that bound how far back and ahead a query may look.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mctt/layers.h"
#include "mctt/tensor.h"

namespace mctt {

// A context bound in frames; nullopt means unbounded ("inf").
using ContextBound = std::optional<std::size_t>;

ContextBound parse_context_bound(std::string_view text);
std::string context_bound_str(ContextBound bound);

struct ContextWindow {
  ContextBound left;
  ContextBound right;

  static ContextWindow full() { return {}; }
  static ContextWindow causal(ContextBound left = std::nullopt) { return {left, 0}; }
};

// allow(q, k) is true iff time(q) - L <= time(k) <= time(q) + R.
class ContextMask {
 public:
  ContextMask(std::size_t queries, std::size_t keys,
              std::vector<std::uint8_t> allow, ContextWindow window);

  std::size_t queries() const { return queries_; }
  std::size_t keys() const { return keys_; }
  const ContextWindow& window() const { return window_; }
  bool allowed(std::size_t q, std::size_t k) const { return allow_[q * keys_ + k] != 0; }
  std::span<const std::uint8_t> data() const { return allow_; }

 private:
  std::size_t queries_;
  std::size_t keys_;
  std::vector<std::uint8_t> allow_;
  ContextWindow window_;
};

// Query q and key k both sit at time index equal to their position.
ContextMask build_mask(std::size_t queries, std::size_t keys, ContextWindow window);

// Explicit time index per query and key. Used when keys are a concatenation
// of several channels: each key keeps the time of its source frame.
ContextMask build_mask(std::span<const std::size_t> query_times,
                       std::span<const std::size_t> key_times,
                       ContextWindow window);

// Sinusoidal table, rows offset .. offset + frames - 1:
// pe[t][2i] = sin(t / 10000^(2i/d)), pe[t][2i+1] = cos(t / 10000^(2i/d)).
Tensor positional_encoding(std::size_t frames, std::size_t d_model,
                           std::size_t offset = 0);

struct MhaConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;

  void validate() const;
};

// Key and value projections of a key/value source sequence.
struct KeyValue {
  Tensor keys;
  Tensor values;
};

inline constexpr double kMaskedScore = -1e9;

class AttentionBlock {
 public:
  AttentionBlock(const MhaConfig& cfg, std::mt19937_64& rng);

  const MhaConfig& config() const { return cfg_; }

  // q_in: (Tq, d), kv_in: (Tk, d), mask: (Tq, Tk). Returns (Tq, d).
  Tensor forward(const Tensor& q_in, const Tensor& kv_in, const ContextMask& mask) const;

  KeyValue project(const Tensor& kv_in) const;

  // Same as forward() on pre-projected keys/values. A null mask lets every
  // query see every key.
  Tensor attend(const Tensor& q_in, const KeyValue& kv, const ContextMask* mask) const;

  // Post-softmax weights, shape (heads, Tq, Tk).
  Tensor attention_weights(const Tensor& q_in, const Tensor& kv_in,
                           const ContextMask* mask) const;

  void collect(ParameterSet& params, const std::string& prefix) const;

 private:
  std::vector<Tensor> head_weights(const Tensor& q, const Tensor& keys,
                                   const ContextMask* mask) const;

  MhaConfig cfg_;
  Linear query_, key_, value_, output_;
  LayerNormParams attn_norm_;
  Linear ff_in_, ff_out_;
  LayerNormParams ff_norm_;
};

}  // namespace mctt
