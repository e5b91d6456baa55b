#pragma once

// Log-STFT square magnitude + phase features for multi-channel audio.

#include <cstddef>
#include <span>
#include <vector>

namespace mctt {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 16000;
};

struct FeatureConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_fft = 512;
  double log_floor = 1e-10;

  std::size_t window_samples(int sample_rate) const;
  std::size_t hop_samples(int sample_rate) const;
  std::size_t bins() const { return n_fft / 2 + 1; }
  // Log magnitude bins followed by phase bins.
  std::size_t feature_dim() const { return 2 * bins(); }
};

// Number of full frames: 1 + floor((n - window) / hop), or 0 if n < window.
std::size_t frame_count(std::size_t n_samples, std::size_t window,
                        std::size_t hop);

// Splits the signal into full frames of window_ms; a trailing partial frame
// is dropped.
std::vector<std::vector<double>> frame_signal(const Waveform& w,
                                              double window_ms = 25.0,
                                              double hop_ms = 10.0);

// One channel's T x F block, row-major.
struct FeatureSlice {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::span<const double> frame(std::size_t t) const {
    return {data.data() + t * dim, dim};
  }
};

// Hann-windowed STFT; each row is log(|S|^2 + floor) for bins 0..n_fft/2
// followed by the wrapped phase angle(S) in (-pi, pi].
FeatureSlice stft_features(const Waveform& w, const FeatureConfig& cfg = {});

// C x T x F, channel-major.
struct MultiChannelFeatures {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::span<const double> channel(std::size_t c) const {
    return {data.data() + c * frames * dim, frames * dim};
  }
  std::span<const double> frame(std::size_t c, std::size_t t) const {
    return {data.data() + (c * frames + t) * dim, dim};
  }
  // Keeps only the listed channels, in the listed order.
  MultiChannelFeatures select(std::span<const std::size_t> which) const;
  // Keeps frames [0, count).
  MultiChannelFeatures truncate(std::size_t count) const;
};

MultiChannelFeatures extract(std::span<const Waveform> channels,
                             const FeatureConfig& cfg = {});

// Per-dimension standardization estimated over a corpus. Off unless a run
// configuration asks for it.
class FeatureNormalizer {
 public:
  FeatureNormalizer() = default;
  FeatureNormalizer(std::vector<double> mean, std::vector<double> inv_std);

  static FeatureNormalizer fit(std::span<const MultiChannelFeatures> corpus);

  bool empty() const { return mean_.empty(); }
  void apply(MultiChannelFeatures& feats) const;
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& inv_std() const { return inv_std_; }

 private:
  std::vector<double> mean_;
  std::vector<double> inv_std_;
};

}  // namespace mctt
