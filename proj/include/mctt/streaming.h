#pragma once

// Frame-by-frame evaluation of the multi-channel encoder. Layer l emits row t
// as soon as its input holds row t + R, so the encoder output h_t is ready
// once frame t + D R has arrived (D = attention depth). Every row is computed
// with the same tensor operations as the offline encoder on the admissible
// window only, which makes the outputs bit-identical to the offline path.

#include <deque>
#include <vector>

#include "mctt/mc_encoder.h"
#include "mctt/transducer.h"

namespace mctt {

class StreamingEncoder {
 public:
  // The encoder's context must have a finite right bound.
  explicit StreamingEncoder(const MultiChannelEncoder& encoder, std::size_t channels);

  std::size_t channels() const { return channels_; }
  std::size_t frames_in() const { return frames_in_; }
  std::size_t frames_out() const { return frames_out_; }
  // Frames the input must run ahead of the output: depth * R.
  std::size_t lookahead() const;

  // One (1, F) feature row per channel. Returns the encoder states that became
  // available, each (1, d_model), in time order.
  std::vector<Tensor> push_frame(const std::vector<Tensor>& rows);
  // Marks the end of the input and drains the remaining states.
  std::vector<Tensor> finish();

  // Rows held across all layers (queries plus cached keys/values).
  std::size_t buffered_rows() const;

 private:
  struct Stage {
    const AttentionBlock* block = nullptr;
    bool cross = false;
    std::size_t received = 0;
    std::size_t produced = 0;
    std::size_t kv_base = 0;
    std::vector<std::deque<Tensor>> queries;       // per channel, front = time `produced`
    std::vector<std::deque<Tensor>> keys, values;  // per key source, front = time kv_base
  };

  void feed(std::size_t stage, const std::vector<Tensor>& rows);
  void run(std::vector<Tensor>& out);
  std::vector<Tensor> produce(Stage& st, std::size_t upper);

  const MultiChannelEncoder* encoder_;
  std::size_t channels_;
  ContextWindow window_;
  std::vector<Stage> stages_;
  std::size_t frames_in_ = 0;
  std::size_t frames_out_ = 0;
  bool finished_ = false;
};

// Streaming encoder plus frame-synchronous greedy search.
class StreamingRecognizer {
 public:
  StreamingRecognizer(const MultiChannelEncoder& encoder, const LabelEncoder& labels,
                      const JointNetwork& joint, std::size_t channels,
                      DecodeOptions options = {});

  // Returns the number of tokens emitted in response to this frame.
  std::size_t push_frame(const std::vector<Tensor>& rows);
  std::size_t finish();

  const DecodeResult& result() const { return decoder_.result(); }
  const StreamingEncoder& encoder() const { return stream_; }

 private:
  std::size_t consume(const std::vector<Tensor>& states);

  StreamingEncoder stream_;
  GreedyDecoder decoder_;
};

// Feature rows of frame t, one (1, F) tensor per channel.
std::vector<Tensor> frame_rows(const MultiChannelFeatures& feats, std::size_t t);

// Runs the whole utterance through a StreamingEncoder; returns (T, d_model).
Tensor stream_encode(const MultiChannelEncoder& encoder, const MultiChannelFeatures& feats);

DecodeResult stream_decode(const MultiChannelEncoder& encoder, const LabelEncoder& labels,
                           const JointNetwork& joint, const MultiChannelFeatures& feats,
                           DecodeOptions options = {});

}  // namespace mctt
