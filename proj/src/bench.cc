#include "mctt/bench.h"

#include <sched.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <random>

#include "mctt/metrics.h"

namespace mctt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

DecodeResult decode_once(const TransducerModel& model, const MultiChannelFeatures& feats) {
  return model.config().encoder.context.right ? model.decode_streaming(feats)
                                              : model.decode(feats);
}

MultiChannelFeatures random_features(std::size_t channels, std::size_t frames,
                                     std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  MultiChannelFeatures f{channels, frames, dim, std::vector<double>(channels * frames * dim)};
  for (auto& v : f.data) v = d(rng);
  return f;
}

}  // namespace

bool pin_to_current_cpu() {
#ifdef __linux__
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof set, &set) == 0;
#else
  return false;
#endif
}

UtteranceLatency time_utterances(const TransducerModel& model,
                                 const std::vector<Utterance>& utts, std::size_t n_utts) {
  UtteranceLatency out;
  const std::size_t n = std::min(n_utts, utts.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto start = Clock::now();
    decode_once(model, utts[i].feats);
    out.seconds.push_back(seconds_since(start));
  }
  if (n < 10) {
    out.warning = "only " + std::to_string(n) + " utterances timed; percentiles are unreliable";
  }
  if (n > 0) {
    out.tp50 = percentile_nearest_rank(out.seconds, 50);
    out.tp90 = percentile_nearest_rank(out.seconds, 90);
    out.tp99 = percentile_nearest_rank(out.seconds, 99);
  }
  return out;
}

ScalingReport measure_scaling(TransducerModel& model, const ScalingOptions& options) {
  const auto saved_audio = model.config().encoder.context;
  const auto saved_label = model.config().l_label;
  std::mt19937_64 rng(options.seed);
  const std::size_t dim = model.config().encoder.feature_dim;
  const auto short_feats = random_features(options.channels, options.short_frames, dim, rng);
  const auto long_feats = random_features(options.channels, options.long_frames, dim, rng);

  auto fastest = [&](const MultiChannelFeatures& f, bool streaming) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < options.repeats; ++r) {
      const auto start = Clock::now();
      if (streaming) {
        model.decode_streaming(f);
      } else {
        model.decode(f);
      }
      best = std::min(best, seconds_since(start));
    }
    return best;
  };

  ScalingReport rep;
  model.set_audio_context(options.finite);
  model.set_label_context(options.finite_label_left);
  rep.finite_short_per_frame = fastest(short_feats, true) / options.short_frames;
  rep.finite_long_per_frame = fastest(long_feats, true) / options.long_frames;

  model.set_audio_context(ContextWindow::full());
  model.set_label_context(std::nullopt);
  rep.full_short_total = fastest(short_feats, false);
  rep.full_long_total = fastest(long_feats, false);

  model.set_audio_context(saved_audio);
  model.set_label_context(saved_label);
  return rep;
}

}  // namespace mctt
