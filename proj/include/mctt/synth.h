#pragma once

// Synthetic multi-channel corpus: each token is a short harmonic tone with its
// own fundamental, the tones are strung together into a clean source, and
// every microphone channel receives a delayed, scaled copy plus independent
// white noise.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mctt/features.h"
#include "mctt/vocab.h"

namespace mctt {

struct SynthSpec {
  std::size_t n_utts = 10;
  std::size_t channels = 2;
  std::size_t vocab_size = 26;  // ordinary tokens, excluding blank and sos
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  double snr_db_lo = 0.0;
  double snr_db_hi = 20.0;
  // Channel c is (channels - 1 - c) * step dB noisier than the last channel,
  // so channel 0 is always the noisiest.
  double channel_snr_step_db = 3.0;
  std::size_t max_delay_samples = 8;
  double gain_lo = 0.7;
  double gain_hi = 1.0;
  double token_ms = 100.0;
  double pad_ms = 50.0;  // silence before and after the tokens
  double amplitude = 0.25;
  int sample_rate = 16000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Fundamental frequency of ordinary token k (0-based).
double token_frequency(std::size_t k);

struct SynthUtterance {
  std::string id;
  TokenSequence tokens;  // vocabulary ids (letters start at id 2)
  std::vector<double> source;
  std::vector<Waveform> channels;
  std::vector<Waveform> clean;  // delayed, scaled source per channel
  double snr_db = 0.0;          // drawn per utterance
  std::vector<double> channel_snr_db;
  std::vector<std::size_t> delays;
  std::vector<double> gains;
};

// Deterministic in (spec.seed, index); independent of other utterances.
SynthUtterance synth_utterance(const SynthSpec& spec, std::size_t index);

// Sample-domain SNR in dB of clean against (noisy - clean).
double measure_snr_db(const Waveform& clean, const Waveform& noisy);

enum class Split { kTrain, kDev, kTest };
std::string split_str(Split s);
Split parse_split(const std::string& text);
// 80/10/10 by utterance index.
Split split_of(std::size_t index, std::size_t n_utts);

struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
  std::vector<std::filesystem::path> channel_paths;  // absolute after loading
  std::string transcript;
  double snr_db = 0.0;
  std::vector<double> channel_snr_db;
  std::vector<std::size_t> delays;
};

// Writes wav/<id>_ch<c>.wav, transcripts.txt, vocab.txt and manifest.jsonl
// (one JSON record per line). Returns the manifest entries.
std::vector<ManifestEntry> write_corpus(const SynthSpec& spec,
                                        const std::filesystem::path& dir);

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

}  // namespace mctt
