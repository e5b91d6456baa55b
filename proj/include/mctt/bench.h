#pragma once

// Single-threaded decode latency: per-utterance wall clock percentiles, and
// how per-frame cost moves with utterance length for limited and unlimited
// attention context.

#include <cstdint>
#include <string>
#include <vector>

#include "mctt/dataset.h"
#include "mctt/model.h"

namespace mctt {

// Restricts the calling thread to the CPU it is running on. Returns false
// where the platform does not allow it.
bool pin_to_current_cpu();

struct UtteranceLatency {
  std::vector<double> seconds;
  double tp50 = 0.0, tp90 = 0.0, tp99 = 0.0;
  std::string warning;  // set when fewer than 10 utterances were timed
};

// Greedy-decodes each utterance once (streaming when the model's right
// context is finite, offline otherwise) and reports nearest-rank TP50/90/99.
UtteranceLatency time_utterances(const TransducerModel& model,
                                 const std::vector<Utterance>& utts, std::size_t n_utts);

struct ScalingOptions {
  std::size_t short_frames = 100;
  std::size_t long_frames = 400;
  ContextWindow finite{20, 10};
  ContextBound finite_label_left = 20;
  std::size_t channels = 2;
  std::size_t repeats = 5;  // the fastest repeat is kept
  std::uint64_t seed = 1;
};

struct ScalingReport {
  double finite_short_per_frame = 0.0;  // seconds per frame, streaming
  double finite_long_per_frame = 0.0;
  double full_short_total = 0.0;        // seconds per utterance, offline
  double full_long_total = 0.0;

  double finite_ratio() const { return finite_long_per_frame / finite_short_per_frame; }
  double full_ratio() const { return full_long_total / full_short_total; }
};

// Times decoding of random feature streams of both lengths. The model's own
// context settings are restored afterwards.
ScalingReport measure_scaling(TransducerModel& model, const ScalingOptions& options);

}  // namespace mctt
