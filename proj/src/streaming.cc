#include "mctt/streaming.h"

#include <algorithm>

#include "mctt/errors.h"

namespace mctt {

StreamingEncoder::StreamingEncoder(const MultiChannelEncoder& encoder, std::size_t channels)
    : encoder_(&encoder), channels_(channels), window_(encoder.config().context) {
  if (!window_.right) {
    throw ConfigError("streaming needs a finite right context (R), got inf");
  }
  if (channels_ == 0) throw InputError("streaming: no channels");
  const auto& cfg = encoder.config();
  auto add_stage = [&](const AttentionBlock& block, bool cross) {
    Stage st;
    st.block = &block;
    st.cross = cross;
    st.queries.resize(channels_);
    st.keys.resize(channels_);
    st.values.resize(channels_);
    stages_.push_back(std::move(st));
  };
  for (std::size_t l = 0; l < cfg.n_layers_csa; ++l) add_stage(encoder.csa_block(l), false);
  if (channels_ > 1) {
    for (std::size_t l = 0; l < cfg.n_layers_cca; ++l) add_stage(encoder.cca_block(l), true);
  }
}

std::size_t StreamingEncoder::lookahead() const { return stages_.size() * *window_.right; }

std::size_t StreamingEncoder::buffered_rows() const {
  std::size_t n = 0;
  for (const auto& st : stages_) {
    for (const auto& q : st.queries) n += q.size();
    for (const auto& k : st.keys) n += k.size();
  }
  return n;
}

void StreamingEncoder::feed(std::size_t stage, const std::vector<Tensor>& rows) {
  Stage& st = stages_[stage];
  const auto& cfg = encoder_->config();
  for (std::size_t c = 0; c < channels_; ++c) st.queries[c].push_back(rows[c]);
  for (std::size_t k = 0; k < channels_; ++k) {
    // Avg sources are per query channel; CSA and Concat sources are the
    // channel rows themselves.
    const bool averaged = st.cross && cfg.combiner == Combiner::kAvg;
    KeyValue kv = st.block->project(averaged ? combine(rows, k, Combiner::kAvg, cfg.avg_divisor)
                                             : rows[k]);
    st.keys[k].push_back(kv.keys);
    st.values[k].push_back(kv.values);
  }
  ++st.received;
}

std::vector<Tensor> StreamingEncoder::produce(Stage& st, std::size_t upper) {
  const std::size_t t = st.produced;
  std::size_t lo = window_.left && t > *window_.left ? t - *window_.left : 0;
  lo = std::max(lo, st.kv_base);
  const std::size_t hi = std::min(t + *window_.right, upper);
  const bool concat = st.cross && encoder_->config().combiner == Combiner::kConcat;

  std::vector<Tensor> out;
  out.reserve(channels_);
  std::vector<Tensor> krows, vrows;
  for (std::size_t i = 0; i < channels_; ++i) {
    krows.clear();
    vrows.clear();
    for (std::size_t j = 0; j < channels_; ++j) {
      const bool use = concat ? j != i : j == i;
      if (!use) continue;
      for (std::size_t s = lo; s <= hi; ++s) {
        krows.push_back(st.keys[j][s - st.kv_base]);
        vrows.push_back(st.values[j][s - st.kv_base]);
      }
    }
    KeyValue kv{concat_rows(krows), concat_rows(vrows)};
    out.push_back(st.block->attend(st.queries[i].front(), kv, nullptr));
  }
  for (auto& q : st.queries) q.pop_front();
  ++st.produced;
  if (window_.left) {
    const std::size_t keep_from = st.produced > *window_.left ? st.produced - *window_.left : 0;
    while (st.kv_base < keep_from) {
      for (auto& k : st.keys) k.pop_front();
      for (auto& v : st.values) v.pop_front();
      ++st.kv_base;
    }
  }
  return out;
}

void StreamingEncoder::run(std::vector<Tensor>& out) {
  bool complete = finished_;  // is the current stage's input complete?
  for (std::size_t l = 0; l < stages_.size(); ++l) {
    Stage& st = stages_[l];
    while (st.produced < st.received &&
           (complete || st.produced + *window_.right < st.received)) {
      auto rows = produce(st, st.received - 1);
      if (l + 1 < stages_.size()) {
        feed(l + 1, rows);
      } else {
        out.push_back(fuse(rows));
        ++frames_out_;
      }
    }
    complete = complete && st.produced == st.received;
  }
}

std::vector<Tensor> StreamingEncoder::push_frame(const std::vector<Tensor>& rows) {
  if (finished_) throw StateError("streaming encoder: frame pushed after finish()");
  if (rows.size() != channels_) {
    throw DimensionError("streaming encoder: " + std::to_string(rows.size()) +
                         " channel rows for " + std::to_string(channels_) + " channels");
  }
  NoGradGuard no_grad;
  std::vector<Tensor> embedded;
  embedded.reserve(channels_);
  for (const auto& r : rows) embedded.push_back(encoder_->embed_channel(r, frames_in_));
  ++frames_in_;
  feed(0, embedded);
  std::vector<Tensor> out;
  run(out);
  return out;
}

std::vector<Tensor> StreamingEncoder::finish() {
  NoGradGuard no_grad;
  finished_ = true;
  std::vector<Tensor> out;
  run(out);
  return out;
}

StreamingRecognizer::StreamingRecognizer(const MultiChannelEncoder& encoder,
                                         const LabelEncoder& labels, const JointNetwork& joint,
                                         std::size_t channels, DecodeOptions options)
    : stream_(encoder, channels), decoder_(labels, joint, options) {}

std::size_t StreamingRecognizer::consume(const std::vector<Tensor>& states) {
  std::size_t emitted = 0;
  for (const auto& h : states) emitted += decoder_.push_frame(h);
  return emitted;
}

std::size_t StreamingRecognizer::push_frame(const std::vector<Tensor>& rows) {
  return consume(stream_.push_frame(rows));
}

std::size_t StreamingRecognizer::finish() { return consume(stream_.finish()); }

std::vector<Tensor> frame_rows(const MultiChannelFeatures& feats, std::size_t t) {
  std::vector<Tensor> rows;
  rows.reserve(feats.channels);
  for (std::size_t c = 0; c < feats.channels; ++c) {
    auto f = feats.frame(c, t);
    rows.emplace_back(Shape{1, feats.dim}, std::vector<double>(f.begin(), f.end()));
  }
  return rows;
}

Tensor stream_encode(const MultiChannelEncoder& encoder, const MultiChannelFeatures& feats) {
  StreamingEncoder stream(encoder, feats.channels);
  std::vector<Tensor> states;
  for (std::size_t t = 0; t < feats.frames; ++t) {
    for (auto& h : stream.push_frame(frame_rows(feats, t))) states.push_back(h);
  }
  for (auto& h : stream.finish()) states.push_back(h);
  NoGradGuard no_grad;
  return concat_rows(states);
}

DecodeResult stream_decode(const MultiChannelEncoder& encoder, const LabelEncoder& labels,
                           const JointNetwork& joint, const MultiChannelFeatures& feats,
                           DecodeOptions options) {
  StreamingRecognizer rec(encoder, labels, joint, feats.channels, options);
  for (std::size_t t = 0; t < feats.frames; ++t) rec.push_frame(frame_rows(feats, t));
  rec.finish();
  return rec.result();
}

}  // namespace mctt
