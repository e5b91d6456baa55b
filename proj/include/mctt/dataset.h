#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mctt/config.h"
#include "mctt/features.h"
#include "mctt/synth.h"
#include "mctt/vocab.h"

namespace mctt {

struct Utterance {
  std::string id;
  MultiChannelFeatures feats;
  TokenSequence tokens;
  double snr_db = 0.0;
};

// Reads every channel file of the entry (mono files, or one interleaved
// file), keeps the requested channels (all when empty) and extracts features.
MultiChannelFeatures load_features(const ManifestEntry& entry, const FeatureConfig& cfg,
                                   const std::vector<std::size_t>& channels);

// Utterances of one split (every split when nullopt), in manifest order.
std::vector<Utterance> load_utterances(const RunConfig& cfg, const Vocabulary& vocab,
                                       std::optional<Split> split);

void normalize_all(std::vector<Utterance>& utts, const FeatureNormalizer& norm);

}  // namespace mctt
