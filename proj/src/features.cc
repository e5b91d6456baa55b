#include "mctt/features.h"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "mctt/errors.h"

namespace mctt {

namespace {

std::size_t ms_to_samples(double ms, int sample_rate) {
  return static_cast<std::size_t>(std::lround(ms * sample_rate / 1000.0));
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// Planning is not thread-safe in FFTW; executing an existing plan on fresh
// arrays is. Plans are cached per size and never destroyed.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(n / 2 + 1));
  // FFTW_ESTIMATE keeps the chosen algorithm, and so the output bits,
  // identical from run to run.
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(),
                                     FFTW_ESTIMATE);
  plans.emplace(n, p);
  return p;
}

}  // namespace

std::size_t FeatureConfig::window_samples(int sample_rate) const {
  return ms_to_samples(window_ms, sample_rate);
}

std::size_t FeatureConfig::hop_samples(int sample_rate) const {
  return ms_to_samples(hop_ms, sample_rate);
}

std::size_t frame_count(std::size_t n_samples, std::size_t window,
                        std::size_t hop) {
  if (n_samples < window) return 0;
  return 1 + (n_samples - window) / hop;
}

std::vector<std::vector<double>> frame_signal(const Waveform& w,
                                              double window_ms, double hop_ms) {
  if (!(hop_ms > 0.0) || window_ms < hop_ms) {
    throw InputError("frame_signal: need window_ms >= hop_ms > 0");
  }
  if (w.sample_rate <= 0) throw InputError("frame_signal: sample_rate must be positive");
  const std::size_t win = ms_to_samples(window_ms, w.sample_rate);
  const std::size_t hop = ms_to_samples(hop_ms, w.sample_rate);
  const std::size_t count = frame_count(w.samples.size(), win, hop);
  if (count == 0) {
    throw InputError("empty features: signal of " + std::to_string(w.samples.size()) +
                     " samples is shorter than one " + std::to_string(win) +
                     "-sample window");
  }
  std::vector<std::vector<double>> frames(count);
  for (std::size_t t = 0; t < count; ++t) {
    frames[t].assign(w.samples.begin() + t * hop, w.samples.begin() + t * hop + win);
  }
  return frames;
}

FeatureSlice stft_features(const Waveform& w, const FeatureConfig& cfg) {
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw InputError("stft_features: non-finite sample");
  }
  const std::size_t win = cfg.window_samples(w.sample_rate);
  if (cfg.n_fft < win) {
    throw InputError("stft_features: n_fft " + std::to_string(cfg.n_fft) +
                     " is smaller than the " + std::to_string(win) +
                     "-sample window");
  }
  auto frames = frame_signal(w, cfg.window_ms, cfg.hop_ms);

  std::vector<double> hann(win);
  for (std::size_t n = 0; n < win; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(win));
  }

  const std::size_t bins = cfg.bins();
  FeatureSlice out;
  out.frames = frames.size();
  out.dim = cfg.feature_dim();
  out.data.resize(out.frames * out.dim);

  fftw_plan plan = r2c_plan(cfg.n_fft);
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(cfg.n_fft));
  std::unique_ptr<fftw_complex, FftwDeleter> spec(fftw_alloc_complex(bins));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double* buf = in.get();
    for (std::size_t n = 0; n < cfg.n_fft; ++n) buf[n] = n < win ? frames[t][n] * hann[n] : 0.0;
    fftw_execute_dft_r2c(plan, buf, spec.get());
    double* row = out.data.data() + t * out.dim;
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = spec.get()[k][0];
      const double im = spec.get()[k][1];
      row[k] = std::log(re * re + im * im + cfg.log_floor);
      double phase = std::atan2(im, re);
      if (phase <= -std::numbers::pi) phase = std::numbers::pi;
      if (phase == 0.0) phase = 0.0;  // folds -0.0
      row[bins + k] = phase;
    }
  }
  return out;
}

MultiChannelFeatures MultiChannelFeatures::select(
    std::span<const std::size_t> which) const {
  MultiChannelFeatures out;
  out.channels = which.size();
  out.frames = frames;
  out.dim = dim;
  for (auto c : which) {
    if (c >= channels) {
      throw InputError("channel " + std::to_string(c) + " requested from " +
                       std::to_string(channels) + "-channel features");
    }
    auto src = channel(c);
    out.data.insert(out.data.end(), src.begin(), src.end());
  }
  return out;
}

MultiChannelFeatures MultiChannelFeatures::truncate(std::size_t count) const {
  if (count > frames) count = frames;
  MultiChannelFeatures out;
  out.channels = channels;
  out.frames = count;
  out.dim = dim;
  for (std::size_t c = 0; c < channels; ++c) {
    auto src = channel(c);
    out.data.insert(out.data.end(), src.begin(), src.begin() + count * dim);
  }
  return out;
}

MultiChannelFeatures extract(std::span<const Waveform> channels,
                             const FeatureConfig& cfg) {
  if (channels.empty()) throw InputError("extract: no channels");
  for (const auto& ch : channels) {
    if (ch.samples.size() != channels[0].samples.size() ||
        ch.sample_rate != channels[0].sample_rate) {
      throw InputError("extract: channels are not aligned (" +
                       std::to_string(channels[0].samples.size()) + " vs " +
                       std::to_string(ch.samples.size()) + " samples)");
    }
  }
  MultiChannelFeatures out;
  out.channels = channels.size();
  for (const auto& ch : channels) {
    auto slice = stft_features(ch, cfg);
    out.frames = slice.frames;
    out.dim = slice.dim;
    out.data.insert(out.data.end(), slice.data.begin(), slice.data.end());
  }
  return out;
}

FeatureNormalizer::FeatureNormalizer(std::vector<double> mean,
                                     std::vector<double> inv_std)
    : mean_(std::move(mean)), inv_std_(std::move(inv_std)) {
  if (mean_.size() != inv_std_.size()) {
    throw DimensionError("normalizer: mean and scale sizes differ");
  }
}

FeatureNormalizer FeatureNormalizer::fit(
    std::span<const MultiChannelFeatures> corpus) {
  if (corpus.empty()) throw InputError("normalizer: empty corpus");
  const std::size_t dim = corpus[0].dim;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  double count = 0.0;
  for (const auto& f : corpus) {
    if (f.dim != dim) throw DimensionError("normalizer: feature dims differ");
    for (std::size_t i = 0; i < f.data.size(); i += dim) {
      for (std::size_t j = 0; j < dim; ++j) {
        sum[j] += f.data[i + j];
        sq[j] += f.data[i + j] * f.data[i + j];
      }
      count += 1.0;
    }
  }
  std::vector<double> mean(dim), inv(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    mean[j] = sum[j] / count;
    const double var = std::max(sq[j] / count - mean[j] * mean[j], 0.0);
    inv[j] = 1.0 / std::sqrt(var + 1e-8);
  }
  return FeatureNormalizer(std::move(mean), std::move(inv));
}

void FeatureNormalizer::apply(MultiChannelFeatures& feats) const {
  if (empty()) return;
  if (feats.dim != mean_.size()) {
    throw DimensionError("normalizer: fitted on dim " + std::to_string(mean_.size()) +
                         ", applied to dim " + std::to_string(feats.dim));
  }
  for (std::size_t i = 0; i < feats.data.size(); i += feats.dim) {
    for (std::size_t j = 0; j < feats.dim; ++j) {
      feats.data[i + j] = (feats.data[i + j] - mean_[j]) * inv_std_[j];
    }
  }
}

}  // namespace mctt
