#pragma once

// Joint network, transducer loss over the (T, U + 1) alignment lattice, a
// brute-force enumeration of the same sum, and greedy decoding.
//
// Lattice semantics: at node (t, u) the model has consumed frames 0 .. t - 1
// and emitted y_1 .. y_u. A blank moves to (t + 1, u), label y_{u+1} moves to
// (t, u + 1). Every alignment ends with the blank leaving (T - 1, U).

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mctt/label_encoder.h"
#include "mctt/layers.h"
#include "mctt/tensor.h"
#include "mctt/vocab.h"

namespace mctt {

// logits = W2 tanh(W1 [h; g] + b1) + b2, blank at index 0.
class JointNetwork {
 public:
  JointNetwork() = default;
  JointNetwork(std::size_t d_audio, std::size_t d_label, std::size_t d_joint,
               std::size_t vocab_size, std::mt19937_64& rng);

  std::size_t vocab_size() const { return vocab_size_; }

  // h: (n, d_audio), g: (n, d_label) -> (n, vocab_size).
  Tensor forward(const Tensor& h, const Tensor& g) const;
  // h: (T, d_audio), g: (U + 1, d_label) -> (T, U + 1, vocab_size).
  Tensor lattice(const Tensor& h, const Tensor& g) const;

  const Linear& hidden() const { return hidden_; }
  const Linear& output() const { return output_; }
  void collect(ParameterSet& params, const std::string& prefix) const;

 private:
  void check_widths(const Tensor& h, const Tensor& g) const;

  std::size_t d_audio_ = 0, d_label_ = 0, vocab_size_ = 0;
  Linear hidden_, output_;
};

// Dense forward/backward tables of one lattice, all (T, U + 1) row-major.
struct ForwardBackward {
  std::size_t frames = 0;
  std::size_t labels = 0;  // U
  std::vector<double> alpha;
  std::vector<double> beta;
  double log_likelihood = 0.0;
  // d(-log P) / d log_probs, same layout as log_probs. Empty unless asked.
  std::vector<double> grad;

  double occupancy(std::size_t t, std::size_t u) const;
};

inline constexpr double kNormalizationTolerance = 1e-6;

// log_probs is (T, U + 1, V) with rows normalized over V.
ForwardBackward forward_backward(const Tensor& log_probs, const TokenSequence& y,
                                 bool with_grad);

// -log P(y | x) as a differentiable scalar of log_probs.
Tensor transducer_loss(const Tensor& log_probs, const TokenSequence& y);
// Same, starting from unnormalized joint logits.
Tensor transducer_loss_from_logits(const Tensor& logits, const TokenSequence& y);

inline constexpr std::size_t kBruteForceLimit = 12;

// Number of alignments in a T-frame, U-label lattice: C(T + U - 1, U).
std::uint64_t alignment_count(std::size_t frames, std::size_t labels);

struct BruteForceResult {
  double loss = 0.0;
  std::uint64_t paths = 0;
};

// Sums every alignment path explicitly. Requires T + U <= kBruteForceLimit.
BruteForceResult brute_force_loss(const Tensor& log_probs, const TokenSequence& y);

struct DecodeOptions {
  std::size_t max_symbols_per_frame = 5;
};

struct DecodeResult {
  TokenSequence tokens;
  std::vector<std::size_t> emit_frames;  // frame index of each token
  std::size_t joint_calls = 0;
};

// Frame-synchronous greedy search. Feed encoder states one at a time; the
// decisions do not depend on how the frames are batched.
class GreedyDecoder {
 public:
  GreedyDecoder(const LabelEncoder& labels, const JointNetwork& joint,
                DecodeOptions options = {});

  // h_t: (1, d_audio). Returns how many tokens this frame emitted.
  std::size_t push_frame(const Tensor& h_t);

  const DecodeResult& result() const { return result_; }
  std::size_t frames() const { return frames_; }

 private:
  const LabelEncoder* labels_;
  const JointNetwork* joint_;
  DecodeOptions options_;
  LabelState state_;
  DecodeResult result_;
  std::size_t frames_ = 0;
};

// Argmax with ties broken toward the lowest id. The sos marker is never a
// candidate.
TokenId argmax_token(std::span<const double> logits);

DecodeResult greedy_decode(const Tensor& h, const LabelEncoder& labels,
                           const JointNetwork& joint, DecodeOptions options = {});

}  // namespace mctt
