#pragma once

// Multi-channel audio encoder: a shared input projection, channel-wise
// self-attention (CSA) layers applied to every channel with one set of
// weights, cross-channel attention (CCA) layers whose keys/values come from
// a combination of the other channels, and a final average over channels.

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mctt/attention.h"
#include "mctt/features.h"
#include "mctt/layers.h"
#include "mctt/tensor.h"

namespace mctt {

enum class Combiner { kAvg, kConcat };

Combiner parse_combiner(std::string_view text);
std::string combiner_str(Combiner c);

// Divisor of the Avg combiner. kChannels is the 1/C factor; kOtherChannels
// divides by the number of summed channels, C - 1.
enum class AvgDivisor { kChannels, kOtherChannels };

struct EncoderConfig {
  std::size_t feature_dim = 514;
  MhaConfig mha;
  std::size_t n_layers_csa = 2;
  std::size_t n_layers_cca = 2;
  Combiner combiner = Combiner::kAvg;
  AvgDivisor avg_divisor = AvgDivisor::kChannels;
  ContextWindow context;

  // Attention layers actually traversed for a C-channel input (CCA layers
  // are skipped when C == 1).
  std::size_t depth(std::size_t channels) const {
    return n_layers_csa + (channels > 1 ? n_layers_cca : 0);
  }
  void validate() const;
};

// Per-channel (T, d_model) sequences, channel order preserved.
using ChannelEncodings = std::vector<Tensor>;

// Key/value source for channel i's cross-channel attention.
//   kAvg:    (1/C) * sum_{j != i} X_j               -> (T, d)
//   kConcat: [X_j for j != i, ascending]            -> ((C-1) T, d)
Tensor combine(const ChannelEncodings& encs, std::size_t i, Combiner combiner,
               AvgDivisor divisor = AvgDivisor::kChannels);

// Elementwise mean over channels -> (T, d).
Tensor fuse(const ChannelEncodings& encs);

// Mask for channel i's CCA queries against combine(...)'s output.
ContextMask cross_channel_mask(std::size_t frames, std::size_t channels,
                               Combiner combiner, ContextWindow window);

class MultiChannelEncoder {
 public:
  MultiChannelEncoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }
  // Inference-time override of the attention window; weights are unchanged.
  void set_context(ContextWindow window) { cfg_.context = window; }

  // (T, F) features -> (T, d_model): shared projection plus positional
  // encoding for frames offset .. offset + T - 1.
  Tensor embed_channel(const Tensor& feats, std::size_t offset = 0) const;

  Tensor csa_layer(std::size_t layer, const Tensor& x, const ContextMask& mask) const;
  ChannelEncodings cca_layer(std::size_t layer, const ChannelEncodings& encs) const;

  // Everything up to (not including) fusion.
  ChannelEncodings encode_channels(const MultiChannelFeatures& feats) const;
  // Encoder output states h_1..h_T.
  Tensor encode(const MultiChannelFeatures& feats) const;

  const Linear& input_projection() const { return embed_; }
  const AttentionBlock& csa_block(std::size_t layer) const { return csa_.at(layer); }
  const AttentionBlock& cca_block(std::size_t layer) const { return cca_.at(layer); }

  void collect(ParameterSet& params, const std::string& prefix) const;

 private:
  EncoderConfig cfg_;
  Linear embed_;
  std::vector<AttentionBlock> csa_;
  std::vector<AttentionBlock> cca_;
};

// Copies channel c of feats into a constant (T, F) tensor.
Tensor channel_tensor(const MultiChannelFeatures& feats, std::size_t c);

}  // namespace mctt
